#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pgt/common.hpp"
#include "pgt/harness.hpp"

using namespace pgt;
namespace fs = std::filesystem;

namespace {

harness::ExperimentConfig tiny_config(const std::string& out_dir) {
    harness::ExperimentConfig cfg;
    cfg.seed = 13;
    cfg.world.train_per_category = 6;
    cfg.world.test_per_category = 4;
    cfg.model.d_model = 16;
    cfg.model.n_heads = 2;
    cfg.model.d_ff = 32;
    cfg.model.context_len = 256;
    cfg.train.steps = 30;
    cfg.train.batch_size = 4;
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    cfg.out_dir = out_dir;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem)
        : path(fs::temp_directory_path() / ("pgt_" + stem)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config json round-trip and hashes") {
    auto cfg = tiny_config("x");
    auto back = harness::ExperimentConfig::from_json(cfg.to_canonical_json());
    CHECK(back.hash() == cfg.hash());
    CHECK(back.seed == cfg.seed);
    CHECK(back.train.steps == cfg.train.steps);

    // out_dir stays outside the hash
    auto moved = cfg;
    moved.out_dir = "elsewhere";
    CHECK(moved.hash() == cfg.hash());

    // mode changes compile lineage but not the dataset lineage
    auto other = cfg;
    other.mode = dialogue::Mode::no_phys;
    CHECK(other.hash_world() == cfg.hash_world());
    CHECK(other.hash_compile() != cfg.hash_compile());
    CHECK(other.hash_train() != cfg.hash_train());

    auto reseeded = cfg;
    reseeded.seed = 14;
    CHECK(reseeded.hash_world() != cfg.hash_world());

    CHECK_THROWS(harness::ExperimentConfig::from_json(R"({"mode": "banana"})"));
    CHECK_THROWS(harness::ExperimentConfig::from_json(R"({"eval": {"judge": "remote"}})"));
}

TEST_CASE("full tiny pipeline with no-op reruns") {
    TempDir dir("pipeline");
    auto cfg = tiny_config(dir.str());

    CHECK(!harness::cmd_gen(cfg).skipped);
    CHECK(!harness::cmd_compile(cfg).skipped);
    CHECK(!harness::cmd_train(cfg).skipped);
    CHECK(!harness::cmd_infer(cfg).skipped);
    CHECK(!harness::cmd_eval(cfg).skipped);

    for (const char* f : {"dataset.jsonl", "dialogues.jsonl", "dialogues.txt", "trainlog.csv",
                          "checkpoints/final.pgt", "checkpoints/init.pgt", "predictions.jsonl",
                          "report.json", "report.txt"})
        CHECK(fs::exists(dir.path / f));

    // reruns are no-ops and leave bytes untouched
    auto before = read_file(dir.str() + "/dataset.jsonl");
    CHECK(harness::cmd_gen(cfg).skipped);
    CHECK(harness::cmd_train(cfg).skipped);
    CHECK(harness::cmd_eval(cfg).skipped);
    CHECK(read_file(dir.str() + "/dataset.jsonl") == before);

    auto report = harness::cmd_report(cfg);
    CHECK(report.find("Average") != std::string::npos);
}

TEST_CASE("stage ordering and stale detection") {
    TempDir dir("stale");
    auto cfg = tiny_config(dir.str());
    CHECK_THROWS(harness::cmd_compile(cfg));  // no dataset yet

    harness::cmd_gen(cfg);
    harness::cmd_compile(cfg);

    // same directory, different config
    auto other = cfg;
    other.seed = 99;
    CHECK_THROWS_AS(harness::cmd_gen(other), harness::StaleRunError);

    // same full config except mode: compile stage hash changes
    auto remode = cfg;
    remode.mode = dialogue::Mode::no_phys;
    CHECK_THROWS_AS(harness::cmd_compile(remode), harness::StaleRunError);
}

TEST_CASE("train rejects dialogues from another mode") {
    TempDir dir("modes");
    auto cfg = tiny_config(dir.str());
    harness::cmd_gen(cfg);
    harness::cmd_compile(cfg);
    // hand the trainer a config claiming a different mode but the same
    // compile stamp, simulating a tampered manifest
    auto d = dialogue::from_jsonl(read_file(dir.str() + "/dialogues.jsonl"));
    for (auto& s : d) s.mode = dialogue::Mode::single_turn;
    write_file(dir.str() + "/dialogues.jsonl", dialogue::to_jsonl(d));
    CHECK_THROWS(harness::cmd_train(cfg));
}

TEST_CASE("pipeline determinism across run directories") {
    TempDir d1("det1"), d2("det2");
    auto c1 = tiny_config(d1.str());
    auto c2 = tiny_config(d2.str());
    for (auto* c : {&c1, &c2}) {
        harness::cmd_gen(*c);
        harness::cmd_compile(*c);
        harness::cmd_train(*c);
        harness::cmd_infer(*c);
        harness::cmd_eval(*c);
    }
    for (const char* f : {"dataset.jsonl", "dialogues.jsonl", "checkpoints/final.pgt",
                          "predictions.jsonl", "report.json"})
        CHECK(read_file((d1.path / f).string()) == read_file((d2.path / f).string()));
}

TEST_CASE("ablation shares the dataset and the model init") {
    TempDir dir("ablate");
    auto cfg = tiny_config(dir.str());
    auto result = harness::cmd_ablate(cfg);
    CHECK(result.errors.empty());
    CHECK(result.reports.size() == 3);

    auto root_ds = read_file(dir.str() + "/dataset.jsonl");
    for (const char* m : {"no_phys", "single_turn", "multi_turn"}) {
        auto sub = dir.path / ("mode_" + std::string(m));
        CHECK(read_file((sub / "dataset.jsonl").string()) == root_ds);
        CHECK(fs::exists(sub / "report.json"));
    }

    // identical initial parameters across modes
    auto i1 = tinylm::load_checkpoint(dir.str() + "/mode_no_phys/checkpoints/init.pgt");
    auto i2 = tinylm::load_checkpoint(dir.str() + "/mode_multi_turn/checkpoints/init.pgt");
    REQUIRE(i1.params.tensors().size() == i2.params.tensors().size());
    for (size_t i = 0; i < i1.params.tensors().size(); ++i)
        CHECK(i1.params.tensors()[i].data == i2.params.tensors()[i].data);

    CHECK(result.table_text.find("multi_turn") != std::string::npos);
    CHECK(result.table_text.find("direction:") != std::string::npos);
    CHECK(fs::exists(dir.path / "ablation.txt"));
    CHECK(fs::exists(dir.path / "ablation.json"));

    auto report = harness::cmd_report(cfg);
    CHECK(report.find("loss segments") != std::string::npos);
}
