#include "pgt/tinylm.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pgt/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace pgt::tinylm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr int kFirstBinId = 8;  // specials occupy ids [0, 8)

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

std::string layer_prefix(int l) { return "layer" + std::to_string(l) + "."; }

// out = xhat * diag(g) + b, with per-row statistics cached for backward.
void layer_norm(const RowMatrix& x, const Tensor& gain, const Tensor& bias, RowMatrix& xhat,
                Eigen::VectorXd& istd, RowMatrix& out) {
    const int S = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    xhat.resize(S, d);
    istd.resize(S);
    out.resize(S, d);
    Eigen::Map<const Eigen::RowVectorXd> g(gain.data.data(), d);
    Eigen::Map<const Eigen::RowVectorXd> b(bias.data.data(), d);
    for (int t = 0; t < S; ++t) {
        double mu = x.row(t).mean();
        double var = (x.row(t).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + kLnEps);
        istd(t) = is;
        xhat.row(t) = (x.row(t).array() - mu) * is;
        out.row(t) = xhat.row(t).cwiseProduct(g) + b;
    }
}

// Input gradient of layer_norm; gain/bias stay frozen so their gradients are not formed.
RowMatrix layer_norm_backward(const RowMatrix& dy, const RowMatrix& xhat,
                              const Eigen::VectorXd& istd, const Tensor& gain) {
    const int S = static_cast<int>(dy.rows());
    const int d = static_cast<int>(dy.cols());
    Eigen::Map<const Eigen::RowVectorXd> g(gain.data.data(), d);
    RowMatrix dx(S, d);
    for (int t = 0; t < S; ++t) {
        Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(g);
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(t)).mean();
        dx.row(t) = istd(t) * (dxhat.array() - m1 - xhat.row(t).array() * m2);
    }
    return dx;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
    if (n_bins < 0 || kFirstBinId + n_bins > vocab_size)
        throw std::invalid_argument("n_bins inconsistent with vocab_size");
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || context_len <= 0)
        throw std::invalid_argument("model dimensions must be positive");
    if (d_model % n_heads != 0) throw std::invalid_argument("d_model must divide by n_heads");
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
}

void ParameterStore::add(Tensor t) {
    if (index_.count(t.name)) throw std::logic_error("duplicate tensor " + t.name);
    index_[t.name] = tensors_.size();
    tensors_.push_back(std::move(t));
}

std::vector<std::string> ParameterStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& t : tensors_)
        if (t.trainable) out.push_back(t.name);
    return out;
}

std::vector<std::string> ParameterStore::frozen_names() const {
    std::vector<std::string> out;
    for (const auto& t : tensors_)
        if (!t.trainable) out.push_back(t.name);
    return out;
}

ParameterStore init_params(const ModelConfig& cfg) {
    cfg.validate();
    ParameterStore store;
    store.cfg = cfg;

    auto gaussian_tensor = [&](const std::string& name, std::vector<int> shape, bool trainable) {
        Tensor t;
        t.name = name;
        t.shape = std::move(shape);
        size_t n = 1;
        for (int s : t.shape) n *= static_cast<size_t>(s);
        t.data.resize(n);
        Pcg32 rng(cfg.seed, fnv1a64(name));
        for (auto& v : t.data) v = rng.gaussian(0.0, 0.02);
        t.trainable = trainable;
        store.add(std::move(t));
    };
    auto const_tensor = [&](const std::string& name, std::vector<int> shape, double value) {
        Tensor t;
        t.name = name;
        t.shape = std::move(shape);
        size_t n = 1;
        for (int s : t.shape) n *= static_cast<size_t>(s);
        t.data.assign(n, value);
        t.trainable = false;
        store.add(std::move(t));
    };

    const int d = cfg.d_model;
    gaussian_tensor("frame_embed", {cfg.n_bins, d}, false);
    gaussian_tensor("projector", {d, d}, false);
    gaussian_tensor("word_embed", {cfg.vocab_size, d}, false);
    {
        // tied at init; trainable only under the ablation flag
        Tensor head;
        head.name = "output_head";
        head.shape = {cfg.vocab_size, d};
        head.data = store.at("word_embed").data;
        head.trainable = cfg.train_output_head;
        store.add(std::move(head));
    }
    gaussian_tensor("pos_embed", {cfg.context_len, d}, false);
    for (int l = 0; l < cfg.n_layers; ++l) {
        std::string p = layer_prefix(l);
        const_tensor(p + "ln1.g", {d}, 1.0);
        const_tensor(p + "ln1.b", {d}, 0.0);
        gaussian_tensor(p + "attn.wq", {d, d}, true);
        gaussian_tensor(p + "attn.wk", {d, d}, true);
        gaussian_tensor(p + "attn.wv", {d, d}, true);
        gaussian_tensor(p + "attn.wo", {d, d}, true);
        const_tensor(p + "ln2.g", {d}, 1.0);
        const_tensor(p + "ln2.b", {d}, 0.0);
        gaussian_tensor(p + "ffn.w1", {d, cfg.d_ff}, true);
        const_tensor(p + "ffn.b1", {cfg.d_ff}, 0.0);
        store.at(p + "ffn.b1").trainable = true;
        gaussian_tensor(p + "ffn.w2", {cfg.d_ff, d}, true);
        const_tensor(p + "ffn.b2", {d}, 0.0);
        store.at(p + "ffn.b2").trainable = true;
    }
    const_tensor("ln_f.g", {d}, 1.0);
    const_tensor("ln_f.b", {d}, 0.0);
    return store;
}

ForwardTrace forward(const ParameterStore& params, std::span<const int> ids) {
    const ModelConfig& cfg = params.cfg;
    const int S = static_cast<int>(ids.size());
    if (S == 0) throw std::invalid_argument("forward: empty input");
    if (S > cfg.context_len)
        throw std::invalid_argument("forward: sequence of " + std::to_string(S) +
                                    " tokens exceeds context length " +
                                    std::to_string(cfg.context_len));
    const int d = cfg.d_model;
    const int nh = cfg.n_heads;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto frame_embed = params.at("frame_embed").mat();
    auto projector = params.at("projector").mat();
    auto word_embed = params.at("word_embed").mat();
    auto pos_embed = params.at("pos_embed").mat();

    ForwardTrace tr;
    tr.embedded.resize(S, d);
    for (int t = 0; t < S; ++t) {
        int id = ids[static_cast<size_t>(t)];
        if (id < 0 || id >= cfg.vocab_size)
            throw std::invalid_argument("forward: token id out of range");
        if (id >= kFirstBinId && id < kFirstBinId + cfg.n_bins) {
            // perception path: frame embedding through the projector
            tr.embedded.row(t) = frame_embed.row(id - kFirstBinId) * projector;
        } else {
            tr.embedded.row(t) = word_embed.row(id);
        }
        tr.embedded.row(t) += pos_embed.row(t);
    }

    RowMatrix x = tr.embedded;
    tr.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache& c = tr.layers[static_cast<size_t>(l)];
        std::string p = layer_prefix(l);
        RowMatrix ln1_out;
        layer_norm(x, params.at(p + "ln1.g"), params.at(p + "ln1.b"), c.ln1_xhat, c.ln1_istd,
                   ln1_out);
        c.q.noalias() = ln1_out * params.at(p + "attn.wq").mat();
        c.k.noalias() = ln1_out * params.at(p + "attn.wk").mat();
        c.v.noalias() = ln1_out * params.at(p + "attn.wv").mat();
        c.att_concat.resize(S, d);
        c.probs.assign(static_cast<size_t>(nh), RowMatrix::Zero(S, S));
        for (int h = 0; h < nh; ++h) {
            auto qh = c.q.middleCols(h * dh, dh);
            auto kh = c.k.middleCols(h * dh, dh);
            auto vh = c.v.middleCols(h * dh, dh);
            RowMatrix scores = (qh * kh.transpose()) * scale;
            RowMatrix& probs = c.probs[static_cast<size_t>(h)];
            for (int t = 0; t < S; ++t) {
                auto seg = scores.row(t).head(t + 1);
                double m = seg.maxCoeff();
                Eigen::RowVectorXd e = (seg.array() - m).exp();
                probs.row(t).head(t + 1) = e / e.sum();
            }
            c.att_concat.middleCols(h * dh, dh).noalias() = probs * vh;
        }
        c.x_mid.noalias() = c.att_concat * params.at(p + "attn.wo").mat();
        c.x_mid += x;

        RowMatrix ln2_out;
        layer_norm(c.x_mid, params.at(p + "ln2.g"), params.at(p + "ln2.b"), c.ln2_xhat,
                   c.ln2_istd, ln2_out);
        c.ffn_pre.noalias() = ln2_out * params.at(p + "ffn.w1").mat();
        c.ffn_pre.rowwise() +=
            Eigen::Map<const Eigen::RowVectorXd>(params.at(p + "ffn.b1").data.data(), cfg.d_ff);
        c.ffn_act = c.ffn_pre.unaryExpr([](double v) { return gelu(v); });
        x.noalias() = c.ffn_act * params.at(p + "ffn.w2").mat();
        x.rowwise() +=
            Eigen::Map<const Eigen::RowVectorXd>(params.at(p + "ffn.b2").data.data(), d);
        x += c.x_mid;
    }

    layer_norm(x, params.at("ln_f.g"), params.at("ln_f.b"), tr.lnf_xhat, tr.lnf_istd,
               tr.final_states);
    tr.logits.noalias() = tr.final_states * params.at("output_head").mat().transpose();
    return tr;
}

LossResult nll_loss(const ForwardTrace& trace, std::span<const int> ids,
                    std::span<const uint8_t> mask) {
    const int S = static_cast<int>(ids.size());
    if (mask.size() != ids.size()) throw std::invalid_argument("nll_loss: mask/ids length mismatch");
    if (S > 0 && mask[0]) throw std::invalid_argument("nll_loss: mask[0] has no predicting context");
    LossResult res;
    for (int p = 1; p < S; ++p) {
        if (!mask[static_cast<size_t>(p)]) continue;
        auto row = trace.logits.row(p - 1);
        double m = row.maxCoeff();
        double lse = m + std::log((row.array() - m).exp().sum());
        res.total += lse - row(ids[static_cast<size_t>(p)]);
        res.masked_count += 1;
    }
    return res;
}

Gradients backward(const ParameterStore& params, const ForwardTrace& trace,
                   std::span<const int> ids, std::span<const uint8_t> mask) {
    const ModelConfig& cfg = params.cfg;
    const int S = static_cast<int>(ids.size());
    if (mask.size() != ids.size())
        throw std::invalid_argument("backward: mask/ids length mismatch");
    if (S > 0 && mask[0]) throw std::invalid_argument("backward: mask[0] has no predicting context");
    const int d = cfg.d_model;
    const int nh = cfg.n_heads;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Gradients grads;
    for (const auto& name : params.trainable_names())
        grads.emplace(name, AlignedVec(params.at(name).size(), 0.0));
    auto gmat = [&](const std::string& name) {
        const Tensor& t = params.at(name);
        return Eigen::Map<RowMatrix>(grads.at(name).data(), t.rows(), t.cols());
    };

    // d(sum NLL)/d(logits): softmax minus one-hot at masked target rows
    RowMatrix dlogits = RowMatrix::Zero(S, cfg.vocab_size);
    bool any = false;
    for (int p = 1; p < S; ++p) {
        if (!mask[static_cast<size_t>(p)]) continue;
        any = true;
        auto row = trace.logits.row(p - 1);
        double m = row.maxCoeff();
        Eigen::RowVectorXd e = (row.array() - m).exp();
        dlogits.row(p - 1) += e / e.sum();
        dlogits(p - 1, ids[static_cast<size_t>(p)]) -= 1.0;
    }
    if (!any) return grads;

    RowMatrix dx;
    dx.noalias() = dlogits * params.at("output_head").mat();
    if (params.at("output_head").trainable)
        gmat("output_head").noalias() += dlogits.transpose() * trace.final_states;
    dx = layer_norm_backward(dx, trace.lnf_xhat, trace.lnf_istd, params.at("ln_f.g"));

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerCache& c = trace.layers[static_cast<size_t>(l)];
        std::string p = layer_prefix(l);
        Eigen::Map<const Eigen::RowVectorXd> g2(params.at(p + "ln2.g").data.data(), d);
        Eigen::Map<const Eigen::RowVectorXd> b2v(params.at(p + "ln2.b").data.data(), d);

        // FFN
        RowMatrix ln2_out =
            (c.ln2_xhat.array().rowwise() * g2.array()).rowwise() + b2v.array();
        {
            auto db2 = Eigen::Map<Eigen::RowVectorXd>(grads.at(p + "ffn.b2").data(), d);
            db2 += dx.colwise().sum();
        }
        gmat(p + "ffn.w2").noalias() += c.ffn_act.transpose() * dx;
        RowMatrix dact;
        dact.noalias() = dx * params.at(p + "ffn.w2").mat().transpose();
        RowMatrix dpre =
            dact.cwiseProduct(c.ffn_pre.unaryExpr([](double v) { return gelu_grad(v); }));
        {
            auto db1 = Eigen::Map<Eigen::RowVectorXd>(grads.at(p + "ffn.b1").data(), cfg.d_ff);
            db1 += dpre.colwise().sum();
        }
        gmat(p + "ffn.w1").noalias() += ln2_out.transpose() * dpre;
        RowMatrix dln2_out;
        dln2_out.noalias() = dpre * params.at(p + "ffn.w1").mat().transpose();
        RowMatrix dx_mid =
            dx + layer_norm_backward(dln2_out, c.ln2_xhat, c.ln2_istd, params.at(p + "ln2.g"));

        // attention
        Eigen::Map<const Eigen::RowVectorXd> g1(params.at(p + "ln1.g").data.data(), d);
        Eigen::Map<const Eigen::RowVectorXd> b1v(params.at(p + "ln1.b").data.data(), d);
        RowMatrix ln1_out =
            (c.ln1_xhat.array().rowwise() * g1.array()).rowwise() + b1v.array();
        gmat(p + "attn.wo").noalias() += c.att_concat.transpose() * dx_mid;
        RowMatrix dconcat;
        dconcat.noalias() = dx_mid * params.at(p + "attn.wo").mat().transpose();

        RowMatrix dq = RowMatrix::Zero(S, d), dk = RowMatrix::Zero(S, d),
                  dv = RowMatrix::Zero(S, d);
        for (int h = 0; h < nh; ++h) {
            auto qh = c.q.middleCols(h * dh, dh);
            auto kh = c.k.middleCols(h * dh, dh);
            auto vh = c.v.middleCols(h * dh, dh);
            const RowMatrix& probs = c.probs[static_cast<size_t>(h)];
            auto dch = dconcat.middleCols(h * dh, dh);
            RowMatrix dprobs;
            dprobs.noalias() = dch * vh.transpose();
            dv.middleCols(h * dh, dh).noalias() += probs.transpose() * dch;
            // softmax backward; probs is zero above the diagonal, which also
            // zeroes the corresponding score gradients
            RowMatrix dscores(S, S);
            for (int t = 0; t < S; ++t) {
                double dot = dprobs.row(t).cwiseProduct(probs.row(t)).sum();
                dscores.row(t).array() = probs.row(t).array() * (dprobs.row(t).array() - dot);
            }
            dq.middleCols(h * dh, dh).noalias() += (dscores * kh) * scale;
            dk.middleCols(h * dh, dh).noalias() += (dscores.transpose() * qh) * scale;
        }
        gmat(p + "attn.wq").noalias() += ln1_out.transpose() * dq;
        gmat(p + "attn.wk").noalias() += ln1_out.transpose() * dk;
        gmat(p + "attn.wv").noalias() += ln1_out.transpose() * dv;
        RowMatrix dln1_out;
        dln1_out.noalias() = dq * params.at(p + "attn.wq").mat().transpose();
        dln1_out.noalias() += dk * params.at(p + "attn.wk").mat().transpose();
        dln1_out.noalias() += dv * params.at(p + "attn.wv").mat().transpose();
        dx = dx_mid + layer_norm_backward(dln1_out, c.ln1_xhat, c.ln1_istd, params.at(p + "ln1.g"));
    }
    return grads;
}

GradCheckReport grad_check(ParameterStore& params, std::span<const int> ids,
                           std::span<const uint8_t> mask, double eps, int coords_per_tensor,
                           uint64_t probe_seed) {
    ForwardTrace tr = forward(params, ids);
    Gradients analytic = backward(params, tr, ids, mask);

    GradCheckReport report;
    for (const auto& name : params.trainable_names()) {
        Tensor& t = params.at(name);
        Pcg32 rng(probe_seed, fnv1a64("gradcheck/" + name));
        double worst = 0.0;
        for (int c = 0; c < coords_per_tensor; ++c) {
            size_t idx = rng.next_bounded(static_cast<uint32_t>(t.size()));
            double saved = t.data[idx];
            t.data[idx] = saved + eps;
            double lp = nll_loss(forward(params, ids), ids, mask).total;
            t.data[idx] = saved - eps;
            double lm = nll_loss(forward(params, ids), ids, mask).total;
            t.data[idx] = saved;
            double fd = (lp - lm) / (2.0 * eps);
            double an = analytic.at(name)[idx];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
        report.entries.push_back({name, worst});
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    return report;
}

std::string serialize_checkpoint(const ParameterStore& params, uint64_t vocab_hash, int64_t step,
                                 const std::string& config_hash) {
    nlohmann::ordered_json header;
    const ModelConfig& c = params.cfg;
    header["config"] = {{"vocab_size", c.vocab_size}, {"n_bins", c.n_bins},
                        {"d_model", c.d_model},       {"n_layers", c.n_layers},
                        {"n_heads", c.n_heads},       {"d_ff", c.d_ff},
                        {"context_len", c.context_len}, {"seed", c.seed},
                        {"train_output_head", c.train_output_head}};
    header["vocab_hash"] = vocab_hash;
    header["step"] = step;
    header["config_hash"] = config_hash;
    auto dir = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& t : params.tensors()) {
        dir.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"group", t.trainable ? "trainable" : "frozen"},
                       {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    header["tensors"] = dir;

    std::string hjson = header.dump();
    std::string out;
    out.reserve(4 + 8 + hjson.size() + offset);
    out += "PGT1";
    uint64_t hlen = hjson.size();
    out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out += hjson;
    for (const auto& t : params.tensors())
        out.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(double));
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 12 || bytes.compare(0, 4, "PGT1") != 0)
        throw std::runtime_error("not a PGT1 checkpoint");
    uint64_t hlen;
    std::memcpy(&hlen, bytes.data() + 4, sizeof(hlen));
    if (bytes.size() < 12 + hlen) throw std::runtime_error("truncated checkpoint header");
    auto header = nlohmann::json::parse(bytes.substr(12, hlen));

    Checkpoint ck;
    const auto& jc = header.at("config");
    ModelConfig& c = ck.params.cfg;
    c.vocab_size = jc.at("vocab_size");
    c.n_bins = jc.at("n_bins");
    c.d_model = jc.at("d_model");
    c.n_layers = jc.at("n_layers");
    c.n_heads = jc.at("n_heads");
    c.d_ff = jc.at("d_ff");
    c.context_len = jc.at("context_len");
    c.seed = jc.at("seed");
    c.train_output_head = jc.at("train_output_head");
    ck.vocab_hash = header.at("vocab_hash");
    ck.step = header.at("step");
    ck.config_hash = header.value("config_hash", std::string());

    size_t payload = 12 + hlen;
    for (const auto& jt : header.at("tensors")) {
        Tensor t;
        t.name = jt.at("name").get<std::string>();
        t.shape = jt.at("shape").get<std::vector<int>>();
        t.trainable = jt.at("group").get<std::string>() == "trainable";
        size_t n = 1;
        for (int s : t.shape) n *= static_cast<size_t>(s);
        size_t off = payload + jt.at("offset").get<uint64_t>();
        if (off + n * sizeof(double) > bytes.size())
            throw std::runtime_error("truncated checkpoint payload");
        t.data.resize(n);
        std::memcpy(t.data.data(), bytes.data() + off, n * sizeof(double));
        ck.params.add(std::move(t));
    }
    return ck;
}

void save_checkpoint(const std::string& path, const ParameterStore& params, uint64_t vocab_hash,
                     int64_t step, const std::string& config_hash) {
    // atomic: write sibling temp file then rename
    std::string tmp = path + ".tmp";
    write_file(tmp, serialize_checkpoint(params, vocab_hash, step, config_hash));
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed for checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace pgt::tinylm
