#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pgt/common.hpp"
#include "pgt/dialogue.hpp"
#include "pgt/synthworld.hpp"
#include "pgt/tinylm.hpp"

using namespace pgt;
using tinylm::ModelConfig;
using tinylm::RowMatrix;

namespace {

ModelConfig small_config(int vocab_size, int n_bins) {
    ModelConfig mc;
    mc.vocab_size = vocab_size;
    mc.n_bins = n_bins;
    mc.d_model = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_ff = 32;
    mc.context_len = 160;
    mc.seed = 3;
    return mc;
}

struct Compiled {
    dialogue::Vocab vocab;
    std::vector<dialogue::DialogueSample> dialogues;
};

Compiled compile_some(dialogue::Mode mode, int per_category, uint64_t seed) {
    auto world = synthworld::default_world();
    auto kb = priors::KnowledgeBase::defaults();
    auto q = priors::QuestionSet::defaults();
    Compiled c{dialogue::build_vocab(world, kb, q, 16), {}};
    auto ds = synthworld::generate_dataset(world, per_category, "t", seed);
    for (const auto& s : ds)
        c.dialogues.push_back(
            dialogue::compile_dialogue(s, kb.prior_for(s.category), q, mode, c.vocab));
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig mc = small_config(40, 16);
    CHECK_NOTHROW(mc.validate());
    mc.n_heads = 3;  // 16 % 3 != 0
    CHECK_THROWS(mc.validate());
}

TEST_CASE("parameter partition and shapes") {
    ModelConfig mc = small_config(40, 16);
    auto params = tinylm::init_params(mc);
    auto trainable = params.trainable_names();
    CHECK(trainable.size() == 16);  // 2 layers x (4 attn + 4 ffn)
    for (const auto& n : trainable) {
        bool attn_or_ffn = n.find("attn.") != std::string::npos || n.find("ffn.") != std::string::npos;
        CHECK(attn_or_ffn);
    }
    for (const auto& n : {"frame_embed", "projector", "word_embed", "output_head", "pos_embed"})
        CHECK(!params.at(n).trainable);

    CHECK(params.at("frame_embed").shape == std::vector<int>{16, 16});
    CHECK(params.at("word_embed").shape == std::vector<int>{40, 16});
    CHECK(params.at("output_head").data == params.at("word_embed").data);  // tied at init
    CHECK(params.at("layer0.ln1.g").data[0] == 1.0);
    CHECK(params.at("layer0.ffn.b1").data[0] == 0.0);

    auto again = tinylm::init_params(mc);
    for (size_t i = 0; i < params.tensors().size(); ++i)
        CHECK(params.tensors()[i].data == again.tensors()[i].data);

    ModelConfig mc2 = mc;
    mc2.train_output_head = true;
    CHECK(tinylm::init_params(mc2).at("output_head").trainable);
}

TEST_CASE("softmax rows normalize and logits have the right shape") {
    ModelConfig mc = small_config(40, 16);
    auto params = tinylm::init_params(mc);
    std::vector<int> ids{1, 3, 8, 9, 10, 4, 30, 5};
    auto tr = tinylm::forward(params, ids);
    CHECK(tr.logits.rows() == 8);
    CHECK(tr.logits.cols() == 40);
    for (const auto& layer : tr.layers)
        for (const auto& head : layer.probs)
            for (int r = 0; r < head.rows(); ++r)
                CHECK(head.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("causality: future tokens never leak backward") {
    ModelConfig mc = small_config(40, 16);
    auto params = tinylm::init_params(mc);
    std::vector<int> a{1, 3, 8, 9, 4, 25, 26, 27, 5};
    std::vector<int> b = a;
    b[6] = 39;
    b[8] = 2;
    auto ta = tinylm::forward(params, a);
    auto tb = tinylm::forward(params, b);
    for (int t = 0; t < 6; ++t)
        for (int v = 0; v < 40; ++v) CHECK(ta.logits(t, v) == tb.logits(t, v));
    CHECK((ta.logits.row(6).array() != tb.logits.row(6).array()).any());
}

TEST_CASE("nll on pinned logits") {
    tinylm::ForwardTrace tr;
    tr.logits = RowMatrix::Zero(2, 2);
    tr.logits(0, 0) = 1.0;
    tr.logits(0, 1) = -1.0;
    std::vector<int> ids{0, 1};

    std::vector<uint8_t> mask{0, 1};
    auto r = tinylm::nll_loss(tr, ids, mask);
    CHECK(r.masked_count == 1);
    CHECK(r.total == doctest::Approx(std::log(1.0 + std::exp(2.0))).epsilon(1e-12));

    std::vector<uint8_t> zero{0, 0};
    CHECK(tinylm::nll_loss(tr, ids, zero).total == 0.0);

    // uniform logits: per-token NLL is ln(vocab)
    tinylm::ForwardTrace tu;
    tu.logits = RowMatrix::Constant(3, 8, 0.37);
    std::vector<int> uids{0, 5, 2};
    std::vector<uint8_t> umask{0, 1, 1};
    CHECK(tinylm::nll_loss(tu, uids, umask).total ==
          doctest::Approx(2.0 * std::log(8.0)).epsilon(1e-12));

    std::vector<uint8_t> bad{1, 0};
    CHECK_THROWS(tinylm::nll_loss(tr, ids, bad));  // position 0 has no target
}

TEST_CASE("loss decomposition matches the per-turn sum") {
    auto c = compile_some(dialogue::Mode::multi_turn, 2, 17);
    ModelConfig mc = small_config(c.vocab.size(), 16);
    mc.context_len = 256;
    auto params = tinylm::init_params(mc);
    int checked = 0;
    for (const auto& d : c.dialogues) {
        if (checked == 4) break;
        ++checked;
        auto full = tinylm::forward(params, d.ids);
        double packed = tinylm::nll_loss(full, d.ids, d.mask).total;
        double per_turn = 0.0;
        for (auto [s, e] : d.turn_spans) {
            std::vector<int> prefix(d.ids.begin(), d.ids.begin() + e);
            std::vector<uint8_t> m(prefix.size(), 0);
            for (int i = s; i < e; ++i) m[static_cast<size_t>(i)] = 1;
            per_turn += tinylm::nll_loss(tinylm::forward(params, prefix), prefix, m).total;
        }
        CHECK(std::abs(packed - per_turn) < 1e-10);
    }
    CHECK(checked == 4);
}

TEST_CASE("backward matches finite differences") {
    auto c = compile_some(dialogue::Mode::no_phys, 2, 5);
    ModelConfig mc = small_config(c.vocab.size(), 16);
    auto params = tinylm::init_params(mc);
    const auto& d = c.dialogues[1];
    auto report = tinylm::grad_check(params, d.ids, d.mask, 1e-4, 8, 77);
    CHECK(report.entries.size() == params.trainable_names().size());
    for (const auto& e : report.entries) {
        INFO(e.name);
        CHECK(e.max_rel_err <= 1e-4);
    }
}

TEST_CASE("backward with the head unfrozen covers it too") {
    auto c = compile_some(dialogue::Mode::no_phys, 1, 6);
    ModelConfig mc = small_config(c.vocab.size(), 16);
    mc.train_output_head = true;
    auto params = tinylm::init_params(mc);
    const auto& d = c.dialogues[0];
    auto grads = tinylm::backward(params, tinylm::forward(params, d.ids), d.ids, d.mask);
    CHECK(grads.count("output_head") == 1);
    auto report = tinylm::grad_check(params, d.ids, d.mask, 1e-4, 6, 3);
    CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("all-zero mask yields all-zero gradients") {
    auto c = compile_some(dialogue::Mode::no_phys, 1, 9);
    ModelConfig mc = small_config(c.vocab.size(), 16);
    auto params = tinylm::init_params(mc);
    const auto& d = c.dialogues[0];
    std::vector<uint8_t> zero(d.ids.size(), 0);
    auto grads = tinylm::backward(params, tinylm::forward(params, d.ids), d.ids, zero);
    CHECK(grads.size() == params.trainable_names().size());
    for (const auto& [name, g] : grads) {
        CHECK(params.at(name).trainable);  // only trainable entries exist
        for (double v : g) CHECK(v == 0.0);
    }
}

TEST_CASE("checkpoint round-trip and stamps") {
    ModelConfig mc = small_config(40, 16);
    auto params = tinylm::init_params(mc);
    std::string bytes = tinylm::serialize_checkpoint(params, 0xabcdefull, 123, "deadbeef");
    CHECK(bytes.substr(0, 4) == "PGT1");

    auto ck = tinylm::deserialize_checkpoint(bytes);
    CHECK(ck.vocab_hash == 0xabcdefull);
    CHECK(ck.step == 123);
    CHECK(ck.config_hash == "deadbeef");
    CHECK(ck.params.cfg.d_model == mc.d_model);
    REQUIRE(ck.params.tensors().size() == params.tensors().size());
    for (size_t i = 0; i < params.tensors().size(); ++i) {
        CHECK(ck.params.tensors()[i].name == params.tensors()[i].name);
        CHECK(ck.params.tensors()[i].data == params.tensors()[i].data);
        CHECK(ck.params.tensors()[i].trainable == params.tensors()[i].trainable);
    }
    CHECK(tinylm::serialize_checkpoint(ck.params, 0xabcdefull, 123, "deadbeef") == bytes);

    auto dir = std::filesystem::temp_directory_path() / "pgt_ck_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "m.pgt").string();
    tinylm::save_checkpoint(path, params, 7, 9, "");
    auto loaded = tinylm::load_checkpoint(path);
    CHECK(loaded.vocab_hash == 7);
    CHECK(loaded.params.at("word_embed").data == params.at("word_embed").data);
    std::filesystem::remove_all(dir);

    CHECK_THROWS(tinylm::deserialize_checkpoint("NOPE" + bytes.substr(4)));
}
