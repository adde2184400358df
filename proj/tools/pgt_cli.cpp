// Pipeline driver. Links the C interface only, so it doubles as a smoke
// test that the shared library surface is sufficient on its own.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <string>

#include "pgt.h"

namespace {

struct CtxGuard {
    pgt_ctx* ctx = nullptr;
    ~CtxGuard() { pgt_ctx_free(ctx); }
};

int fail(pgt_ctx* ctx, pgt_status st) {
    std::fprintf(stderr, "error (%d): %s\n", static_cast<int>(st), pgt_last_error(ctx));
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-grounded dialogue pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // accept global flags after the subcommand too

    std::string config_path, out_dir, mode;
    std::uint64_t seed = 0;
    bool have_seed = false, verbose = false;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out", out_dir, "run directory");
    app.add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    app.add_option("--mode", mode, "dialogue mode: multi_turn | single_turn | no_phys");
    app.add_flag("-v,--verbose", verbose, "progress output");

    const char* stages[] = {"gen", "compile", "train", "infer", "eval", "ablate", "report"};
    const char* blurbs[] = {"generate the synthetic video dataset",
                            "compile training dialogues",
                            "train the model",
                            "run inference on the held-out split",
                            "score predictions into a report",
                            "run all three modes over a shared dataset",
                            "print available reports"};
    for (int i = 0; i < 7; ++i) app.add_subcommand(stages[i], blurbs[i]);

    CLI11_PARSE(app, argc, argv);
    std::string cmd = app.get_subcommands().front()->get_name();

    CtxGuard g;
    if (!config_path.empty()) {
        const char* err = nullptr;
        g.ctx = pgt_ctx_from_file(config_path.c_str(), &err);
        if (!g.ctx) {
            std::fprintf(stderr, "bad config %s: %s\n", config_path.c_str(), err ? err : "?");
            return 1;
        }
    } else {
        g.ctx = pgt_ctx_new();
    }

    pgt_status st = PGT_OK;
    if (!out_dir.empty()) st = pgt_set_out_dir(g.ctx, out_dir.c_str());
    if (st == PGT_OK && have_seed) st = pgt_set_seed(g.ctx, seed);
    if (st == PGT_OK && !mode.empty()) st = pgt_set_mode(g.ctx, mode.c_str());
    if (st == PGT_OK) st = pgt_set_verbose(g.ctx, verbose ? 1 : 0);
    if (st != PGT_OK) return fail(g.ctx, st);

    int skipped = 0;
    if (cmd == "gen") st = pgt_run_gen(g.ctx, &skipped);
    else if (cmd == "compile") st = pgt_run_compile(g.ctx, &skipped);
    else if (cmd == "train") st = pgt_run_train(g.ctx, &skipped);
    else if (cmd == "infer") st = pgt_run_infer(g.ctx, &skipped);
    else if (cmd == "eval") st = pgt_run_eval(g.ctx, &skipped);
    else if (cmd == "ablate") st = pgt_run_ablate(g.ctx);
    else if (cmd == "report") {
        const char* text = nullptr;
        st = pgt_run_report(g.ctx, &text);
        if (st == PGT_OK && text) std::fputs(text, stdout);
    }
    if (st != PGT_OK) return fail(g.ctx, st);

    if (cmd != "report") {
        char hash[32];
        pgt_config_hash(g.ctx, hash, sizeof(hash));
        std::printf("%s: %s (config %s)\n", cmd.c_str(), skipped ? "up to date" : "done", hash);
    }
    return 0;
}
