#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgt/dialogue.hpp"
#include "pgt/tinylm.hpp"

namespace pgt::trainer {

struct TrainConfig {
    dialogue::Mode mode = dialogue::Mode::multi_turn;
    int steps = 8000;
    int batch_size = 8;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;
    uint64_t seed = 0;
    int eval_every = 500;        // progress report cadence, 0 disables
    int checkpoint_every = 2000; // 0 disables periodic checkpoints
    std::string checkpoint_dir;  // empty disables checkpoint writing
    uint64_t vocab_hash = 0;
    std::string config_hash;
    bool verbose = false;

    void validate() const;
};

struct TrainStepRecord {
    int step = 0;
    double loss = 0.0;         // summed masked NLL over the batch
    double loss_prior = 0.0;   // prior-turn segment
    double loss_verdict = 0.0; // verdict-sentence segment
    double grad_norm = 0.0;    // pre-clip global norm of the mean-token gradient
    double seconds = 0.0;      // cumulative wall clock
};

struct TrainLog {
    std::vector<TrainStepRecord> records;
    std::string to_csv() const;
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamState {
    std::unordered_map<std::string, tinylm::AlignedVec> m;
    std::unordered_map<std::string, tinylm::AlignedVec> v;
    int64_t t = 0;

    static AdamState init_for(const tinylm::ParameterStore& params);
};

// Scales gradients so their global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(tinylm::Gradients& grads, double max_norm);

// One bias-corrected Adam update over the trainable group. Gradients must
// cover exactly the trainable tensors.
void adam_step(tinylm::ParameterStore& params, const tinylm::Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

TrainLog train(const TrainConfig& cfg, const std::vector<dialogue::DialogueSample>& dataset,
               tinylm::ParameterStore& params);

}  // namespace pgt::trainer
