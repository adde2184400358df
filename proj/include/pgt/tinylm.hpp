#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pgt::tinylm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// All flat buffers that Eigen maps over use its preferred alignment, so the
// vectorized kernels run the same code path at every allocation and results
// stay bit-reproducible.
using AlignedVec = std::vector<double, Eigen::aligned_allocator<double>>;

struct ModelConfig {
    int vocab_size = 0;
    int n_bins = 0;  // BIN token count; BIN ids occupy [8, 8 + n_bins)
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int context_len = 512;
    uint64_t seed = 0;
    // Ablation switch: when true the output head is its own trainable tensor
    // instead of a frozen copy of the word embeddings.
    bool train_output_head = false;

    void validate() const;
    int head_dim() const { return d_model / n_heads; }
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    AlignedVec data;
    bool trainable = false;

    size_t size() const { return data.size(); }
    int rows() const { return shape.at(0); }
    int cols() const { return shape.size() > 1 ? shape.at(1) : 1; }
    Eigen::Map<RowMatrix> mat() { return {data.data(), rows(), cols()}; }
    Eigen::Map<const RowMatrix> mat() const { return {data.data(), rows(), cols()}; }
};

class ParameterStore {
public:
    ModelConfig cfg;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    std::vector<Tensor>& tensors() { return tensors_; }
    std::vector<std::string> trainable_names() const;
    std::vector<std::string> frozen_names() const;
    void add(Tensor t);

private:
    std::vector<Tensor> tensors_;  // fixed directory order
    std::unordered_map<std::string, size_t> index_;
};

// Gaussian(0, 0.02) weights from PCG32 streams keyed by tensor name;
// layer-norm gains 1, biases 0.
ParameterStore init_params(const ModelConfig& cfg);

struct LayerCache {
    RowMatrix ln1_xhat, ln2_xhat;
    Eigen::VectorXd ln1_istd, ln2_istd;
    RowMatrix q, k, v;               // S x d_model
    std::vector<RowMatrix> probs;    // per head, S x S attention weights
    RowMatrix att_concat;            // S x d_model, before Wo
    RowMatrix x_mid;                 // residual after attention
    RowMatrix ffn_pre;               // S x d_ff, before activation
    RowMatrix ffn_act;               // S x d_ff
};

struct ForwardTrace {
    RowMatrix embedded;  // S x d_model input to the first block
    std::vector<LayerCache> layers;
    RowMatrix lnf_xhat;
    Eigen::VectorXd lnf_istd;
    RowMatrix final_states;  // after final layer norm
    RowMatrix logits;        // S x vocab_size
};

ForwardTrace forward(const ParameterStore& params, std::span<const int> ids);

struct LossResult {
    double total = 0.0;  // summed masked next-token NLL, natural log
    int masked_count = 0;
};

LossResult nll_loss(const ForwardTrace& trace, std::span<const int> ids,
                    std::span<const uint8_t> mask);

// Gradients of the summed loss over the trainable group only.
using Gradients = std::unordered_map<std::string, AlignedVec>;

Gradients backward(const ParameterStore& params, const ForwardTrace& trace,
                   std::span<const int> ids, std::span<const uint8_t> mask);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
};

GradCheckReport grad_check(ParameterStore& params, std::span<const int> ids,
                           std::span<const uint8_t> mask, double eps = 1e-4,
                           int coords_per_tensor = 20, uint64_t probe_seed = 0);

// Checkpoint: "PGT1" magic, u64 header length, JSON header
// {config, vocab_hash, step, tensors: [{name, shape, group, offset}]},
// then raw little-endian doubles in directory order.
struct Checkpoint {
    ParameterStore params;
    uint64_t vocab_hash = 0;
    int64_t step = 0;
    std::string config_hash;  // experiment lineage stamp, may be empty
};

std::string serialize_checkpoint(const ParameterStore& params, uint64_t vocab_hash, int64_t step,
                                 const std::string& config_hash = {});
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const ParameterStore& params, uint64_t vocab_hash,
                     int64_t step, const std::string& config_hash = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pgt::tinylm
