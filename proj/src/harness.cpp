#include "pgt/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "pgt/common.hpp"
#include "pgt/inference.hpp"

namespace fs = std::filesystem;

namespace pgt::harness {

namespace {

std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

bool file_exists(const std::string& path) { return fs::exists(path); }

struct Manifest {
    std::string stage;
    std::string config_hash;
    std::string stage_hash;
    std::map<std::string, std::string> inputs;
    std::vector<std::string> outputs;
};

std::string manifest_path(const ExperimentConfig& cfg, const std::string& stage) {
    return cfg.out_dir + "/" + stage + ".manifest.json";
}

void write_manifest(const ExperimentConfig& cfg, const Manifest& m) {
    nlohmann::ordered_json j;
    j["stage"] = m.stage;
    j["config_hash"] = m.config_hash;
    j["stage_hash"] = m.stage_hash;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    write_file(manifest_path(cfg, m.stage), j.dump(2) + "\n");
}

std::optional<Manifest> read_manifest(const ExperimentConfig& cfg, const std::string& stage) {
    std::string path = manifest_path(cfg, stage);
    if (!file_exists(path)) return std::nullopt;
    auto j = nlohmann::json::parse(read_file(path));
    Manifest m;
    m.stage = j.at("stage");
    m.config_hash = j.at("config_hash");
    m.stage_hash = j.at("stage_hash");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
}

// Writes config.json on first use; a run directory belongs to one config.
void ensure_run_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::string path = cfg.out_dir + "/config.json";
    std::string canonical = cfg.to_canonical_json() + "\n";
    if (file_exists(path)) {
        if (read_file(path) != canonical)
            throw StaleRunError("run directory " + cfg.out_dir +
                                " was created with a different config; use a fresh --out");
    } else {
        write_file(path, canonical);
    }
}

template <typename Body>
StageResult run_stage(const ExperimentConfig& cfg, const std::string& stage,
                      const std::string& stage_hash, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs, Body&& body) {
    ensure_run_dir(cfg);
    StageResult res;
    for (const auto& o : outputs) res.outputs.push_back(cfg.out_dir + "/" + o);

    if (auto m = read_manifest(cfg, stage)) {
        if (m->stage_hash != stage_hash)
            throw StaleRunError("stage '" + stage + "' in " + cfg.out_dir +
                                " was built from a different config (stale inputs); use a fresh --out");
        bool intact = true;
        for (const auto& [name, h] : m->inputs)
            intact = intact && file_exists(cfg.out_dir + "/" + name) &&
                     file_hash(cfg.out_dir + "/" + name) == h;
        for (const auto& o : m->outputs) intact = intact && file_exists(cfg.out_dir + "/" + o);
        if (intact) {
            res.skipped = true;
            return res;
        }
        throw StaleRunError("stage '" + stage + "' in " + cfg.out_dir +
                            " has missing or modified artifacts; use a fresh --out");
    }

    for (const auto& in : inputs)
        if (!file_exists(cfg.out_dir + "/" + in))
            throw std::runtime_error("stage '" + stage + "' needs missing input " + in +
                                     "; run the upstream stage first");
    body();

    Manifest m;
    m.stage = stage;
    m.config_hash = cfg.hash();
    m.stage_hash = stage_hash;
    for (const auto& in : inputs) m.inputs[in] = file_hash(cfg.out_dir + "/" + in);
    m.outputs = outputs;
    write_manifest(cfg, m);
    return res;
}

std::vector<synthworld::VideoSample> load_split(const ExperimentConfig& cfg,
                                                const std::string& prefix) {
    auto all = synthworld::from_jsonl(read_file(cfg.out_dir + "/dataset.jsonl"));
    std::vector<synthworld::VideoSample> out;
    for (auto& v : all)
        if (v.id.rfind(prefix, 0) == 0) out.push_back(std::move(v));
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("world")) {
        const auto& w = j.at("world");
        c.world.frames = w.value("frames", c.world.frames);
        c.world.bins = w.value("bins", c.world.bins);
        c.world.categories = w.value("categories", c.world.categories);
        c.world.train_per_category = w.value("train_per_category", c.world.train_per_category);
        c.world.test_per_category = w.value("test_per_category", c.world.test_per_category);
    }
    if (j.contains("mode")) c.mode = dialogue::mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.model.d_model = m.value("d_model", c.model.d_model);
        c.model.n_layers = m.value("n_layers", c.model.n_layers);
        c.model.n_heads = m.value("n_heads", c.model.n_heads);
        c.model.d_ff = m.value("d_ff", c.model.d_ff);
        c.model.context_len = m.value("context_len", c.model.context_len);
        c.model.train_output_head = m.value("train_output_head", c.model.train_output_head);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.steps = t.value("steps", c.train.steps);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.beta1 = t.value("beta1", c.train.beta1);
        c.train.beta2 = t.value("beta2", c.train.beta2);
        c.train.eps = t.value("eps", c.train.eps);
        c.train.clip_norm = t.value("clip_norm", c.train.clip_norm);
        c.train.eval_every = t.value("eval_every", c.train.eval_every);
        c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.eval.judge = e.value("judge", c.eval.judge);
        c.eval.endpoint = e.value("endpoint", c.eval.endpoint);
        c.eval.judge_model = e.value("judge_model", c.eval.judge_model);
    }
    c.kb_file = j.value("kb_file", c.kb_file);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    ExperimentConfig c = from_json(read_file(path));
    return c;
}

std::string ExperimentConfig::to_canonical_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["world"] = {{"frames", world.frames},
                  {"bins", world.bins},
                  {"categories", world.categories},
                  {"train_per_category", world.train_per_category},
                  {"test_per_category", world.test_per_category}};
    j["mode"] = dialogue::mode_name(mode);
    j["model"] = {{"d_model", model.d_model},   {"n_layers", model.n_layers},
                  {"n_heads", model.n_heads},   {"d_ff", model.d_ff},
                  {"context_len", model.context_len},
                  {"train_output_head", model.train_output_head}};
    j["train"] = {{"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"eps", train.eps},
                  {"clip_norm", train.clip_norm},
                  {"eval_every", train.eval_every},
                  {"checkpoint_every", train.checkpoint_every}};
    j["eval"] = {{"judge", eval.judge},
                 {"endpoint", eval.endpoint},
                 {"judge_model", eval.judge_model}};
    j["kb_file"] = kb_file;
    return j.dump(2);
}

void ExperimentConfig::validate() const {
    if (world.frames < 8) throw std::invalid_argument("world.frames must be >= 8");
    if (world.bins < 2) throw std::invalid_argument("world.bins must be >= 2");
    if (world.train_per_category <= 0 || world.test_per_category <= 0)
        throw std::invalid_argument("per-category sample counts must be positive");
    if (eval.judge != "stub" && eval.judge != "remote")
        throw std::invalid_argument("eval.judge must be 'stub' or 'remote'");
    if (eval.judge == "remote" && eval.endpoint.empty())
        throw std::invalid_argument("remote judge needs eval.endpoint");
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(to_canonical_json())); }

std::string ExperimentConfig::hash_world() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["frames"] = world.frames;
    j["bins"] = world.bins;
    j["categories"] = world.categories;
    j["train_per_category"] = world.train_per_category;
    j["test_per_category"] = world.test_per_category;
    j["kb_file"] = kb_file;
    return hex64(fnv1a64(j.dump()));
}

std::string ExperimentConfig::hash_compile() const {
    return hex64(fnv1a64(hash_world() + "/" + dialogue::mode_name(mode) + "/" +
                         std::to_string(model.context_len)));
}

std::string ExperimentConfig::hash_train() const {
    nlohmann::ordered_json j;
    j["compile"] = hash_compile();
    j["model"] = {model.d_model, model.n_layers, model.n_heads, model.d_ff, model.context_len,
                  model.train_output_head};
    j["train"] = {train.steps, train.batch_size, train.lr, train.beta1, train.beta2, train.eps,
                  train.clip_norm, train.checkpoint_every};
    return hex64(fnv1a64(j.dump()));
}

std::string ExperimentConfig::hash_eval() const {
    return hex64(fnv1a64(hash_train() + "/" + eval.judge + "/" + eval.endpoint + "/" +
                         eval.judge_model));
}

std::vector<synthworld::CategorySpec> world_for(const ExperimentConfig& cfg) {
    auto all = synthworld::default_world();
    if (cfg.world.categories.empty()) return all;
    std::vector<synthworld::CategorySpec> out;
    for (const auto& name : cfg.world.categories)
        out.push_back(synthworld::find_category(all, name));
    return out;
}

priors::KnowledgeBase kb_for(const ExperimentConfig& cfg) {
    if (cfg.kb_file.empty()) return priors::KnowledgeBase::defaults();
    return priors::KnowledgeBase::with_overrides_file(cfg.kb_file);
}

dialogue::Vocab vocab_for(const ExperimentConfig& cfg) {
    return dialogue::build_vocab(world_for(cfg), kb_for(cfg), priors::QuestionSet::defaults(),
                                 cfg.world.bins);
}

StageResult cmd_gen(const ExperimentConfig& cfg) {
    return run_stage(cfg, "gen", cfg.hash_world(), {}, {"dataset.jsonl"}, [&] {
        synthworld::WorldConfig wc{cfg.world.frames, cfg.world.bins};
        auto world = world_for(cfg);
        auto train = synthworld::generate_dataset(world, cfg.world.train_per_category, "train",
                                                  cfg.seed, wc);
        auto test = synthworld::generate_dataset(world, cfg.world.test_per_category, "test",
                                                 cfg.seed, wc);
        write_file(cfg.out_dir + "/dataset.jsonl",
                   synthworld::to_jsonl(train) + synthworld::to_jsonl(test));
    });
}

StageResult cmd_compile(const ExperimentConfig& cfg) {
    return run_stage(
        cfg, "compile", cfg.hash_compile(), {"dataset.jsonl"},
        {"dialogues.jsonl", "dialogues.txt"}, [&] {
            auto samples = load_split(cfg, "train-");
            auto kb = kb_for(cfg);
            auto q = priors::QuestionSet::defaults();
            auto vocab = vocab_for(cfg);
            std::vector<dialogue::DialogueSample> dialogues;
            std::string transcripts;
            for (const auto& s : samples) {
                auto d = dialogue::compile_dialogue(s, kb.prior_for(s.category), q, cfg.mode,
                                                    vocab, cfg.model.context_len);
                transcripts += dialogue::render_transcript(d, vocab);
                dialogues.push_back(std::move(d));
            }
            write_file(cfg.out_dir + "/dialogues.jsonl", dialogue::to_jsonl(dialogues));
            write_file(cfg.out_dir + "/dialogues.txt", transcripts);
        });
}

StageResult cmd_train(const ExperimentConfig& cfg) {
    return run_stage(
        cfg, "train", cfg.hash_train(), {"dialogues.jsonl"},
        {"trainlog.csv", "checkpoints/final.pgt", "checkpoints/init.pgt"}, [&] {
            auto dialogues = dialogue::from_jsonl(read_file(cfg.out_dir + "/dialogues.jsonl"));
            for (const auto& d : dialogues)
                if (d.mode != cfg.mode)
                    throw std::runtime_error(
                        "cmd_train: dialogues were compiled in mode " + dialogue::mode_name(d.mode) +
                        " but config says " + dialogue::mode_name(cfg.mode));
            auto vocab = vocab_for(cfg);
            tinylm::ModelConfig mc;
            mc.vocab_size = vocab.size();
            mc.n_bins = cfg.world.bins;
            mc.d_model = cfg.model.d_model;
            mc.n_layers = cfg.model.n_layers;
            mc.n_heads = cfg.model.n_heads;
            mc.d_ff = cfg.model.d_ff;
            mc.context_len = cfg.model.context_len;
            mc.seed = cfg.seed;
            mc.train_output_head = cfg.model.train_output_head;
            auto params = tinylm::init_params(mc);

            trainer::TrainConfig tc;
            tc.mode = cfg.mode;
            tc.steps = cfg.train.steps;
            tc.batch_size = cfg.train.batch_size;
            tc.lr = cfg.train.lr;
            tc.beta1 = cfg.train.beta1;
            tc.beta2 = cfg.train.beta2;
            tc.eps = cfg.train.eps;
            tc.clip_norm = cfg.train.clip_norm;
            tc.seed = cfg.seed;
            tc.eval_every = cfg.train.eval_every;
            tc.checkpoint_every = cfg.train.checkpoint_every;
            tc.checkpoint_dir = cfg.out_dir + "/checkpoints";
            tc.vocab_hash = vocab.hash();
            tc.config_hash = cfg.hash_train();
            tc.verbose = cfg.verbose;
            auto log = trainer::train(tc, dialogues, params);
            write_file(cfg.out_dir + "/trainlog.csv", log.to_csv());
        });
}

StageResult cmd_infer(const ExperimentConfig& cfg) {
    return run_stage(
        cfg, "infer", cfg.hash_train(), {"dataset.jsonl", "checkpoints/final.pgt"},
        {"predictions.jsonl"}, [&] {
            auto test = load_split(cfg, "test-");
            auto vocab = vocab_for(cfg);
            auto ck = tinylm::load_checkpoint(cfg.out_dir + "/checkpoints/final.pgt");
            if (ck.vocab_hash != vocab.hash())
                throw StaleRunError("cmd_infer: checkpoint was trained with a different vocabulary");
            auto kb = kb_for(cfg);
            auto q = priors::QuestionSet::defaults();
            std::vector<inference::VerdictRecord> records;
            records.reserve(test.size());
            for (const auto& s : test)
                records.push_back(inference::run_grounded_inference(
                    ck.params, s, kb.prior_for(s.category), q, cfg.mode, vocab));
            write_file(cfg.out_dir + "/predictions.jsonl", inference::to_jsonl(records));
        });
}

StageResult cmd_eval(const ExperimentConfig& cfg) {
    return run_stage(
        cfg, "eval", cfg.hash_eval(), {"dataset.jsonl", "predictions.jsonl"},
        {"report.json", "report.txt"}, [&] {
            auto test = load_split(cfg, "test-");
            auto predictions =
                inference::from_jsonl(read_file(cfg.out_dir + "/predictions.jsonl"));
            std::unique_ptr<evalharness::JudgeClient> judge;
            if (cfg.eval.judge == "remote")
                judge = std::make_unique<evalharness::RemoteJudge>(cfg.eval.endpoint,
                                                                   cfg.eval.judge_model);
            else
                judge = std::make_unique<evalharness::StubJudge>();
            auto report = evalharness::evaluate(predictions, test, *judge, cfg.mode,
                                                cfg.hash_eval(), cfg.seed);
            write_file(cfg.out_dir + "/report.json", report.to_json() + "\n");
            write_file(cfg.out_dir + "/report.txt", report.render_table());
        });
}

namespace {

// Bucketed two-series ASCII chart: 'p' = prior turns, 'v' = verdict sentence.
std::string plot_loss_segments(const std::string& csv_text, const std::string& title) {
    std::istringstream in(csv_text);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> prior, verdict;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string field;
        std::vector<double> fields;
        while (std::getline(ls, field, ',')) fields.push_back(std::atof(field.c_str()));
        if (fields.size() >= 4) {
            prior.push_back(fields[2]);
            verdict.push_back(fields[3]);
        }
    }
    if (prior.empty()) return title + ": no records\n";

    const int cols = 64, rows = 12;
    auto bucket = [&](const std::vector<double>& s) {
        std::vector<double> out(cols, 0.0);
        for (int c = 0; c < cols; ++c) {
            size_t lo = s.size() * c / cols, hi = std::max(lo + 1, s.size() * (c + 1) / cols);
            double sum = 0.0;
            for (size_t i = lo; i < hi && i < s.size(); ++i) sum += s[i];
            out[c] = sum / static_cast<double>(hi - lo);
        }
        return out;
    };
    auto bp = bucket(prior), bv = bucket(verdict);
    double hi = 0.0;
    for (double x : bp) hi = std::max(hi, x);
    for (double x : bv) hi = std::max(hi, x);
    if (hi <= 0.0) hi = 1.0;

    std::vector<std::string> grid(rows, std::string(cols, ' '));
    auto place = [&](const std::vector<double>& s, char glyph) {
        for (int c = 0; c < cols; ++c) {
            int r = static_cast<int>(std::floor(s[c] / hi * (rows - 1) + 0.5));
            r = std::clamp(r, 0, rows - 1);
            grid[static_cast<size_t>(rows - 1 - r)][static_cast<size_t>(c)] = glyph;
        }
    };
    place(bp, 'p');
    place(bv, 'v');

    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s  (p = prior turns, v = verdict; max %.2f)\n",
                  title.c_str(), hi);
    out << buf;
    for (const auto& row : grid) out << "  |" << row << "|\n";
    out << "  +" << std::string(cols, '-') << "+  steps ->\n";
    return out.str();
}

}  // namespace

AblateResult cmd_ablate(const ExperimentConfig& cfg) {
    cmd_gen(cfg);
    const std::string dataset_path = cfg.out_dir + "/dataset.jsonl";
    const std::string dataset_bytes = read_file(dataset_path);
    const std::string dataset_hash = hex64(fnv1a64(dataset_bytes));

    AblateResult result;
    const dialogue::Mode modes[] = {dialogue::Mode::no_phys, dialogue::Mode::single_turn,
                                    dialogue::Mode::multi_turn};
    for (dialogue::Mode m : modes) {
        ExperimentConfig sub = cfg;
        sub.mode = m;
        sub.out_dir = cfg.out_dir + "/mode_" + dialogue::mode_name(m);
        std::string name = dialogue::mode_name(m);
        try {
            fs::create_directories(sub.out_dir);
            std::string sub_dataset = sub.out_dir + "/dataset.jsonl";
            if (!file_exists(sub_dataset)) {
                write_file(sub_dataset, dataset_bytes);
                // stamp the shared dataset so downstream guards work unchanged
                ensure_run_dir(sub);
                Manifest gm;
                gm.stage = "gen";
                gm.config_hash = sub.hash();
                gm.stage_hash = sub.hash_world();
                gm.outputs = {"dataset.jsonl"};
                write_manifest(sub, gm);
            }
            cmd_compile(sub);
            cmd_train(sub);
            cmd_infer(sub);
            cmd_eval(sub);
            result.reports[name] =
                evalharness::MetricsReport::from_json(read_file(sub.out_dir + "/report.json"));
        } catch (const std::exception& e) {
            result.errors[name] = e.what();
        }
    }

    // Table-4-shaped comparison
    std::vector<std::string> categories;
    for (const auto& [name, rep] : result.reports)
        for (const auto& [cat, m] : rep.per_category)
            if (std::find(categories.begin(), categories.end(), cat) == categories.end())
                categories.push_back(cat);
    std::sort(categories.begin(), categories.end());

    std::ostringstream txt;
    txt << "three-mode ablation (shared dataset " << dataset_hash << ")\n";
    txt << "AUROC per category; '!' flags a failure (AUROC <= 0.55)\n\n";
    char buf[64];
    txt << "mode         ";
    for (const auto& c : categories) {
        std::snprintf(buf, sizeof(buf), " %10s", c.c_str());
        txt << buf;
    }
    txt << "    Average\n";
    nlohmann::ordered_json jmodes = nlohmann::ordered_json::object();
    for (dialogue::Mode m : modes) {
        std::string name = dialogue::mode_name(m);
        std::snprintf(buf, sizeof(buf), "%-13s", name.c_str());
        txt << buf;
        if (result.errors.count(name)) {
            txt << " FAILED: " << result.errors.at(name) << "\n";
            jmodes[name] = {{"error", result.errors.at(name)}};
            continue;
        }
        const auto& rep = result.reports.at(name);
        for (const auto& c : categories) {
            auto it = rep.per_category.find(c);
            if (it == rep.per_category.end() || !it->second.auroc) {
                std::snprintf(buf, sizeof(buf), " %10s", "-");
            } else {
                double a = *it->second.auroc;
                std::snprintf(buf, sizeof(buf), " %9.3f%c", a, a <= 0.55 ? '!' : ' ');
            }
            txt << buf;
        }
        if (rep.average.auroc)
            std::snprintf(buf, sizeof(buf), " %9.3f%c", *rep.average.auroc,
                          *rep.average.auroc <= 0.55 ? '!' : ' ');
        else
            std::snprintf(buf, sizeof(buf), " %10s", "-");
        txt << buf << "\n";
        jmodes[name] = nlohmann::ordered_json::parse(rep.to_json());
    }

    auto avg_of = [&](const char* name) -> std::optional<double> {
        auto it = result.reports.find(name);
        if (it == result.reports.end()) return std::nullopt;
        return it->second.average.auroc;
    };
    auto multi = avg_of("multi_turn"), single = avg_of("single_turn"), nophys = avg_of("no_phys");
    txt << "\n";
    if (multi && single && nophys) {
        bool best = *multi >= *single && *multi >= *nophys;
        std::snprintf(buf, sizeof(buf), "direction: multi %.3f vs single %.3f vs no_phys %.3f",
                      *multi, *single, *nophys);
        txt << buf << (best ? "  (multi-turn leads or ties)\n" : "  (multi-turn NOT ahead)\n");
    }
    txt << "reference full-scale averages (context only): multi 0.967, single 0.787, no_phys 0.925\n\n";

    for (dialogue::Mode m : modes) {
        std::string name = dialogue::mode_name(m);
        std::string csv_path = cfg.out_dir + "/mode_" + name + "/trainlog.csv";
        if (file_exists(csv_path))
            txt << plot_loss_segments(read_file(csv_path), "loss segments, " + name) << "\n";
    }
    result.table_text = txt.str();

    nlohmann::ordered_json jout;
    jout["config_hash"] = cfg.hash();
    jout["dataset_hash"] = dataset_hash;
    jout["modes"] = jmodes;
    if (multi && single && nophys) {
        jout["direction"] = {{"multi_turn", *multi},
                             {"single_turn", *single},
                             {"no_phys", *nophys},
                             {"multi_turn_leads", *multi >= *single && *multi >= *nophys}};
    }
    write_file(cfg.out_dir + "/ablation.json", jout.dump(2) + "\n");
    write_file(cfg.out_dir + "/ablation.txt", result.table_text);
    return result;
}

std::string cmd_report(const ExperimentConfig& cfg) {
    std::string out;
    for (const char* f : {"report.txt", "ablation.txt"}) {
        std::string path = cfg.out_dir + "/" + f;
        if (file_exists(path)) out += read_file(path);
    }
    if (out.empty()) out = "no reports in " + cfg.out_dir + "; run eval or ablate first\n";
    return out;
}

}  // namespace pgt::harness
