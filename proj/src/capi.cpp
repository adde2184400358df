#include "pgt.h"

#include <cstring>
#include <exception>
#include <string>

#include "pgt/evalharness.hpp"
#include "pgt/harness.hpp"
#include "pgt/tinylm.hpp"
#include "pgt/trainer.hpp"

struct pgt_ctx {
    pgt::harness::ExperimentConfig cfg;
    std::string last_error;
    std::string report_text;
};

namespace {

thread_local std::string g_ctor_error;

template <typename Fn>
pgt_status guarded(pgt_ctx* ctx, Fn&& fn) {
    if (!ctx) return PGT_ERR_INVALID_ARG;
    ctx->last_error.clear();
    try {
        fn();
        return PGT_OK;
    } catch (const pgt::harness::StaleRunError& e) {
        ctx->last_error = e.what();
        return PGT_ERR_STALE_RUN;
    } catch (const pgt::trainer::TrainError& e) {
        ctx->last_error = e.what();
        return PGT_ERR_TRAIN;
    } catch (const pgt::evalharness::RemoteJudgeError& e) {
        ctx->last_error = e.what();
        return PGT_ERR_REMOTE;
    } catch (const std::invalid_argument& e) {
        ctx->last_error = e.what();
        return PGT_ERR_INVALID_ARG;
    } catch (const std::ios_base::failure& e) {
        ctx->last_error = e.what();
        return PGT_ERR_IO;
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return PGT_ERR_INTERNAL;
    }
}

pgt_status run_stage(pgt_ctx* ctx, int* skipped_out,
                     pgt::harness::StageResult (*stage)(const pgt::harness::ExperimentConfig&)) {
    if (skipped_out) *skipped_out = 0;
    return guarded(ctx, [&] {
        auto res = stage(ctx->cfg);
        if (skipped_out) *skipped_out = res.skipped ? 1 : 0;
    });
}

}  // namespace

extern "C" {

const char* pgt_version(void) { return "0.1.0"; }

pgt_ctx* pgt_ctx_new(void) { return new (std::nothrow) pgt_ctx{}; }

pgt_ctx* pgt_ctx_from_json(const char* json_text, const char** err_out) {
    if (err_out) *err_out = nullptr;
    if (!json_text) {
        g_ctor_error = "null config text";
        if (err_out) *err_out = g_ctor_error.c_str();
        return nullptr;
    }
    try {
        auto ctx = new pgt_ctx{};
        ctx->cfg = pgt::harness::ExperimentConfig::from_json(json_text);
        return ctx;
    } catch (const std::exception& e) {
        g_ctor_error = e.what();
        if (err_out) *err_out = g_ctor_error.c_str();
        return nullptr;
    }
}

pgt_ctx* pgt_ctx_from_file(const char* path, const char** err_out) {
    if (err_out) *err_out = nullptr;
    if (!path) {
        g_ctor_error = "null config path";
        if (err_out) *err_out = g_ctor_error.c_str();
        return nullptr;
    }
    try {
        auto ctx = new pgt_ctx{};
        ctx->cfg = pgt::harness::ExperimentConfig::from_file(path);
        return ctx;
    } catch (const std::exception& e) {
        g_ctor_error = e.what();
        if (err_out) *err_out = g_ctor_error.c_str();
        return nullptr;
    }
}

void pgt_ctx_free(pgt_ctx* ctx) { delete ctx; }

pgt_status pgt_set_out_dir(pgt_ctx* ctx, const char* dir) {
    return guarded(ctx, [&] {
        if (!dir || !*dir) throw std::invalid_argument("empty out_dir");
        ctx->cfg.out_dir = dir;
    });
}

pgt_status pgt_set_seed(pgt_ctx* ctx, uint64_t seed) {
    return guarded(ctx, [&] { ctx->cfg.seed = seed; });
}

pgt_status pgt_set_mode(pgt_ctx* ctx, const char* mode) {
    return guarded(ctx, [&] {
        if (!mode) throw std::invalid_argument("null mode");
        ctx->cfg.mode = pgt::dialogue::mode_from_name(mode);
    });
}

pgt_status pgt_set_verbose(pgt_ctx* ctx, int verbose) {
    return guarded(ctx, [&] { ctx->cfg.verbose = verbose != 0; });
}

pgt_status pgt_config_hash(const pgt_ctx* ctx, char* buf, size_t buflen) {
    if (!ctx || !buf) return PGT_ERR_INVALID_ARG;
    std::string h = ctx->cfg.hash();
    if (buflen < h.size() + 1) return PGT_ERR_INVALID_ARG;
    std::memcpy(buf, h.c_str(), h.size() + 1);
    return PGT_OK;
}

pgt_status pgt_run_gen(pgt_ctx* ctx, int* skipped_out) {
    return run_stage(ctx, skipped_out, pgt::harness::cmd_gen);
}
pgt_status pgt_run_compile(pgt_ctx* ctx, int* skipped_out) {
    return run_stage(ctx, skipped_out, pgt::harness::cmd_compile);
}
pgt_status pgt_run_train(pgt_ctx* ctx, int* skipped_out) {
    return run_stage(ctx, skipped_out, pgt::harness::cmd_train);
}
pgt_status pgt_run_infer(pgt_ctx* ctx, int* skipped_out) {
    return run_stage(ctx, skipped_out, pgt::harness::cmd_infer);
}
pgt_status pgt_run_eval(pgt_ctx* ctx, int* skipped_out) {
    return run_stage(ctx, skipped_out, pgt::harness::cmd_eval);
}

pgt_status pgt_run_ablate(pgt_ctx* ctx) {
    return guarded(ctx, [&] {
        auto res = pgt::harness::cmd_ablate(ctx->cfg);
        if (res.reports.empty()) {
            std::string msg = "all modes failed:";
            for (const auto& [name, err] : res.errors) msg += " [" + name + "] " + err;
            throw std::runtime_error(msg);
        }
    });
}

pgt_status pgt_run_report(pgt_ctx* ctx, const char** text_out) {
    if (text_out) *text_out = nullptr;
    return guarded(ctx, [&] {
        ctx->report_text = pgt::harness::cmd_report(ctx->cfg);
        if (text_out) *text_out = ctx->report_text.c_str();
    });
}

const char* pgt_last_error(const pgt_ctx* ctx) {
    return ctx ? ctx->last_error.c_str() : "null context";
}

}  // extern "C"
