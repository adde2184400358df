#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pgt/dialogue.hpp"
#include "pgt/evalharness.hpp"
#include "pgt/priors.hpp"
#include "pgt/synthworld.hpp"
#include "pgt/tinylm.hpp"
#include "pgt/trainer.hpp"

namespace pgt::harness {

struct ExperimentConfig {
    uint64_t seed = 42;

    struct World {
        int frames = 32;
        int bins = 16;
        std::vector<std::string> categories;  // empty = all defaults
        int train_per_category = 200;
        int test_per_category = 50;
    } world;

    dialogue::Mode mode = dialogue::Mode::multi_turn;

    struct Model {
        int d_model = 64;
        int n_layers = 2;
        int n_heads = 4;
        int d_ff = 256;
        int context_len = 512;
        bool train_output_head = false;
    } model;

    struct Train {
        int steps = 8000;
        int batch_size = 8;
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double clip_norm = 1.0;
        int eval_every = 500;
        int checkpoint_every = 2000;
    } train;

    struct Eval {
        std::string judge = "stub";  // stub | remote
        std::string endpoint;
        std::string judge_model = "deepseek-v3";
    } eval;

    std::string kb_file;   // optional priors override
    std::string out_dir = "run";
    bool verbose = false;

    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    // Canonical serialization; out_dir and verbosity are locations/chrome and
    // stay outside the hash.
    std::string to_canonical_json() const;

    std::string hash() const;          // full config
    std::string hash_world() const;    // stamps the dataset
    std::string hash_compile() const;  // + mode
    std::string hash_train() const;    // + model + train
    std::string hash_eval() const;     // + eval

    void validate() const;
};

struct StaleRunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageResult {
    bool skipped = false;
    std::vector<std::string> outputs;
};

// Stage commands. Each reads hash-stamped inputs from cfg.out_dir, writes its
// outputs plus a manifest, and is a no-op when the manifest already matches.
StageResult cmd_gen(const ExperimentConfig& cfg);
StageResult cmd_compile(const ExperimentConfig& cfg);
StageResult cmd_train(const ExperimentConfig& cfg);
StageResult cmd_infer(const ExperimentConfig& cfg);
StageResult cmd_eval(const ExperimentConfig& cfg);

struct AblateResult {
    std::map<std::string, evalharness::MetricsReport> reports;  // by mode name
    std::map<std::string, std::string> errors;                  // modes that failed
    std::string table_text;
};

// Runs the full pipeline three times over a shared dataset and init seed.
AblateResult cmd_ablate(const ExperimentConfig& cfg);

// Renders whatever reports exist in the run directory.
std::string cmd_report(const ExperimentConfig& cfg);

// Shared plumbing, exposed for the CLI and tests.
std::vector<synthworld::CategorySpec> world_for(const ExperimentConfig& cfg);
priors::KnowledgeBase kb_for(const ExperimentConfig& cfg);
dialogue::Vocab vocab_for(const ExperimentConfig& cfg);

}  // namespace pgt::harness
