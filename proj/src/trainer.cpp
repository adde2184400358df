#include "pgt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "pgt/common.hpp"

namespace pgt::trainer {

namespace {

// Splits a sample's masked loss into {prior turns, verdict sentence}.
// The verdict sentence starts at the "verdict" word, one before verdict_pos.
bool in_verdict_segment(const dialogue::DialogueSample& d, int pos) {
    auto [fs, fe] = d.turn_spans.back();
    (void)fs;
    return pos >= d.verdict_pos - 1 && pos < fe;
}

}  // namespace

void TrainConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("steps must be non-negative");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
    if (clip_norm <= 0.0) throw std::invalid_argument("clip_norm must be positive");
}

std::string TrainLog::to_csv() const {
    std::ostringstream out;
    out << "step,loss,loss_prior,loss_verdict,grad_norm,seconds\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.step, r.loss,
                      r.loss_prior, r.loss_verdict, r.grad_norm, r.seconds);
        out << buf;
    }
    return out.str();
}

AdamState AdamState::init_for(const tinylm::ParameterStore& params) {
    AdamState s;
    for (const auto& name : params.trainable_names()) {
        size_t n = params.at(name).size();
        s.m.emplace(name, tinylm::AlignedVec(n, 0.0));
        s.v.emplace(name, tinylm::AlignedVec(n, 0.0));
    }
    return s;
}

double clip_global_norm(tinylm::Gradients& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (double v : g) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (auto& [name, g] : grads)
            for (double& v : g) v *= scale;
    }
    return norm;
}

void adam_step(tinylm::ParameterStore& params, const tinylm::Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
    auto trainable = params.trainable_names();
    if (grads.size() != trainable.size())
        throw std::invalid_argument("adam_step: gradients do not cover the trainable group");
    state.t += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (const auto& name : trainable) {
        auto git = grads.find(name);
        if (git == grads.end())
            throw std::invalid_argument("adam_step: missing gradient for " + name);
        const auto& g = git->second;
        auto& p = params.at(name).data;
        if (g.size() != p.size()) throw std::invalid_argument("adam_step: shape mismatch for " + name);
        auto& m = state.m.at(name);
        auto& v = state.v.at(name);
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

TrainLog train(const TrainConfig& cfg, const std::vector<dialogue::DialogueSample>& dataset,
               tinylm::ParameterStore& params) {
    cfg.validate();
    if (dataset.empty()) throw TrainError("train: empty dataset");
    for (const auto& d : dataset) {
        if (d.mode != cfg.mode)
            throw TrainError("train: sample '" + d.id + "' was compiled in mode " +
                             dialogue::mode_name(d.mode) + " but the trainer is configured for " +
                             dialogue::mode_name(cfg.mode));
        if (cfg.mode == dialogue::Mode::no_phys &&
            std::abs(dialogue::verdict_loss_share(d) - 1.0) > 1e-12)
            throw TrainError("train: no_phys sample '" + d.id + "' masks non-verdict targets");
        if (static_cast<int>(d.ids.size()) > params.cfg.context_len)
            throw TrainError("train: sample '" + d.id + "' exceeds the model context");
    }

    namespace fs = std::filesystem;
    if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);
    auto save = [&](int64_t step, const std::string& stem) {
        if (cfg.checkpoint_dir.empty()) return;
        tinylm::save_checkpoint(cfg.checkpoint_dir + "/" + stem + ".pgt", params, cfg.vocab_hash,
                                step, cfg.config_hash);
    };

    save(0, "init");

    AdamState state = AdamState::init_for(params);
    TrainLog log;
    log.records.reserve(static_cast<size_t>(cfg.steps));

    Pcg32 shuffle_rng(cfg.seed, fnv1a64("trainer/shuffle"));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = order.size();  // forces an initial shuffle
    auto reshuffle = [&] {
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = shuffle_rng.next_bounded(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
    };

    auto trainable = params.trainable_names();
    auto t_start = std::chrono::steady_clock::now();

    for (int step = 1; step <= cfg.steps; ++step) {
        if (cursor + static_cast<size_t>(cfg.batch_size) > order.size()) reshuffle();
        tinylm::Gradients acc;
        for (const auto& name : trainable)
            acc.emplace(name, tinylm::AlignedVec(params.at(name).size(), 0.0));

        double loss_prior = 0.0, loss_verdict = 0.0;
        int masked_total = 0;
        size_t batch_take = std::min(static_cast<size_t>(cfg.batch_size), order.size());
        for (size_t b = 0; b < batch_take; ++b) {
            const auto& d = dataset[order[cursor++]];
            tinylm::ForwardTrace tr = tinylm::forward(params, d.ids);
            // per-position NLL so the segment split is exact
            double sample_loss = 0.0;
            for (size_t p = 1; p < d.ids.size(); ++p) {
                if (!d.mask[p]) continue;
                auto row = tr.logits.row(static_cast<int>(p) - 1);
                double m = row.maxCoeff();
                double nll = m + std::log((row.array() - m).exp().sum()) - row(d.ids[p]);
                sample_loss += nll;
                if (in_verdict_segment(d, static_cast<int>(p)))
                    loss_verdict += nll;
                else
                    loss_prior += nll;
                masked_total += 1;
            }
            if (!std::isfinite(sample_loss))
                throw TrainError("train: non-finite loss at step " + std::to_string(step) +
                                 " on sample '" + d.id + "'");
            tinylm::Gradients g = tinylm::backward(params, tr, d.ids, d.mask);
            for (const auto& name : trainable) {
                auto& dst = acc.at(name);
                const auto& src = g.at(name);
                for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
        }

        // optimize the mean per-masked-token loss
        if (masked_total > 0) {
            double inv = 1.0 / static_cast<double>(masked_total);
            for (auto& [name, g] : acc)
                for (double& v : g) v *= inv;
        }
        double norm = clip_global_norm(acc, cfg.clip_norm);
        adam_step(params, acc, state, cfg);

        TrainStepRecord rec;
        rec.step = step;
        rec.loss = loss_prior + loss_verdict;  // segment sums are the ledger
        rec.loss_prior = loss_prior;
        rec.loss_verdict = loss_verdict;
        rec.grad_norm = norm;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        log.records.push_back(rec);

        if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && cfg.verbose) {
            double mean = masked_total > 0 ? rec.loss / masked_total : 0.0;
            std::fprintf(stderr, "[train %s] step %d/%d loss/token %.4f grad_norm %.4f\n",
                         dialogue::mode_name(cfg.mode).c_str(), step, cfg.steps, mean, norm);
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "step_%06d", step);
            save(step, stem);
        }
    }
    save(cfg.steps, "final");
    return log;
}

}  // namespace pgt::trainer
