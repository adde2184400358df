#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pgt/dialogue.hpp"
#include "pgt/synthworld.hpp"
#include "pgt/tinylm.hpp"
#include "pgt/trainer.hpp"

using namespace pgt;
using dialogue::Mode;
using tinylm::ModelConfig;

namespace {

struct Corpus {
    dialogue::Vocab vocab;
    std::vector<dialogue::DialogueSample> dialogues;
};

Corpus make_corpus(Mode mode, int per_category, uint64_t seed) {
    auto world = synthworld::default_world();
    auto kb = priors::KnowledgeBase::defaults();
    auto q = priors::QuestionSet::defaults();
    Corpus c{dialogue::build_vocab(world, kb, q, 16), {}};
    auto ds = synthworld::generate_dataset(world, per_category, "t", seed);
    for (const auto& s : ds)
        c.dialogues.push_back(
            dialogue::compile_dialogue(s, kb.prior_for(s.category), q, mode, c.vocab));
    return c;
}

ModelConfig small_config(int vocab_size) {
    ModelConfig mc;
    mc.vocab_size = vocab_size;
    mc.n_bins = 16;
    mc.d_model = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_ff = 32;
    mc.context_len = 256;
    mc.seed = 1;
    return mc;
}

trainer::TrainConfig quick_config(Mode mode, int steps) {
    trainer::TrainConfig tc;
    tc.mode = mode;
    tc.steps = steps;
    tc.batch_size = 4;
    tc.seed = 11;
    tc.eval_every = 0;
    tc.checkpoint_every = 0;
    return tc;
}

}  // namespace

TEST_CASE("clip leaves small gradients alone and scales large ones") {
    tinylm::Gradients g;
    g["a"] = {3.0, 4.0};  // norm 5
    double pre = trainer::clip_global_norm(g, 1.0);
    CHECK(pre == doctest::Approx(5.0).epsilon(1e-12));
    double post = std::sqrt(g["a"][0] * g["a"][0] + g["a"][1] * g["a"][1]);
    CHECK(std::abs(post - 1.0) < 1e-12);

    tinylm::Gradients h;
    h["a"] = {0.3, 0.4};
    trainer::clip_global_norm(h, 1.0);
    CHECK(h["a"][0] == 0.3);
    CHECK(h["a"][1] == 0.4);
}

TEST_CASE("first adam step moves a unit-gradient weight by about -lr") {
    // single trainable scalar: m_hat = g, v_hat = g^2, update = -lr g/(|g|+eps)
    auto c = make_corpus(Mode::no_phys, 1, 2);
    ModelConfig mc = small_config(c.vocab.size());
    auto params = tinylm::init_params(mc);
    auto state = trainer::AdamState::init_for(params);
    auto tc = quick_config(Mode::no_phys, 1);

    tinylm::Gradients grads;
    for (const auto& name : params.trainable_names())
        grads[name] = tinylm::AlignedVec(params.at(name).size(), 0.0);
    grads["layer0.attn.wq"][5] = 1.0;
    double before = params.at("layer0.attn.wq").data[5];
    double other = params.at("layer0.attn.wk").data[0];

    trainer::adam_step(params, grads, state, tc);
    double delta = params.at("layer0.attn.wq").data[5] - before;
    CHECK(delta == doctest::Approx(-tc.lr).epsilon(1e-6));
    CHECK(params.at("layer0.attn.wk").data[0] == other);  // zero grad, zero update
}

TEST_CASE("adam rejects incomplete gradient coverage") {
    auto c = make_corpus(Mode::no_phys, 1, 2);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto state = trainer::AdamState::init_for(params);
    auto tc = quick_config(Mode::no_phys, 1);
    tinylm::Gradients grads;
    grads["layer0.attn.wq"] = tinylm::AlignedVec(params.at("layer0.attn.wq").size(), 0.0);
    CHECK_THROWS(trainer::adam_step(params, grads, state, tc));
}

TEST_CASE("zero steps is the identity") {
    auto c = make_corpus(Mode::no_phys, 1, 3);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto before = params;
    auto log = trainer::train(quick_config(Mode::no_phys, 0), c.dialogues, params);
    CHECK(log.records.empty());
    for (size_t i = 0; i < params.tensors().size(); ++i)
        CHECK(params.tensors()[i].data == before.tensors()[i].data);
}

TEST_CASE("descent on an overfit-scale problem") {
    auto c = make_corpus(Mode::no_phys, 2, 4);  // 10 samples
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto log = trainer::train(quick_config(Mode::no_phys, 200), c.dialogues, params);
    REQUIRE(log.records.size() == 200);
    CHECK(log.records.back().loss < log.records.front().loss);
}

TEST_CASE("per-segment losses sum to the total at every step") {
    auto c = make_corpus(Mode::multi_turn, 2, 8);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto log = trainer::train(quick_config(Mode::multi_turn, 25), c.dialogues, params);
    for (const auto& r : log.records)
        CHECK(std::abs(r.loss - (r.loss_prior + r.loss_verdict)) < 1e-10);
}

TEST_CASE("no_phys loss is all verdict") {
    auto c = make_corpus(Mode::no_phys, 1, 8);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto log = trainer::train(quick_config(Mode::no_phys, 10), c.dialogues, params);
    for (const auto& r : log.records) {
        CHECK(r.loss_prior == 0.0);
        CHECK(r.loss == r.loss_verdict);
    }
}

TEST_CASE("training is deterministic and leaves frozen tensors untouched") {
    auto c = make_corpus(Mode::multi_turn, 1, 5);
    ModelConfig mc = small_config(c.vocab.size());
    auto p1 = tinylm::init_params(mc);
    auto p2 = tinylm::init_params(mc);
    auto init = p1;
    auto tc = quick_config(Mode::multi_turn, 40);

    auto l1 = trainer::train(tc, c.dialogues, p1);
    auto l2 = trainer::train(tc, c.dialogues, p2);
    REQUIRE(l1.records.size() == l2.records.size());
    for (size_t i = 0; i < l1.records.size(); ++i) {
        // wall clock aside, the logs must agree bit for bit
        CHECK(l1.records[i].loss == l2.records[i].loss);
        CHECK(l1.records[i].loss_prior == l2.records[i].loss_prior);
        CHECK(l1.records[i].loss_verdict == l2.records[i].loss_verdict);
        CHECK(l1.records[i].grad_norm == l2.records[i].grad_norm);
    }
    for (size_t i = 0; i < p1.tensors().size(); ++i)
        CHECK(p1.tensors()[i].data == p2.tensors()[i].data);

    for (const auto& name : p1.frozen_names())
        CHECK(p1.at(name).data == init.at(name).data);
    int changed = 0;
    for (const auto& name : p1.trainable_names())
        if (p1.at(name).data != init.at(name).data) ++changed;
    CHECK(changed == static_cast<int>(p1.trainable_names().size()));
}

TEST_CASE("mode mismatch is a hard error") {
    auto c = make_corpus(Mode::no_phys, 1, 5);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    CHECK_THROWS_AS(trainer::train(quick_config(Mode::multi_turn, 5), c.dialogues, params),
                    trainer::TrainError);
}

TEST_CASE("non-finite loss aborts with step and sample id") {
    auto c = make_corpus(Mode::no_phys, 1, 6);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    params.at("layer0.attn.wq").data[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        trainer::train(quick_config(Mode::no_phys, 3), c.dialogues, params);
        FAIL("expected TrainError");
    } catch (const trainer::TrainError& e) {
        std::string msg = e.what();
        CHECK(msg.find("step") != std::string::npos);
        CHECK(msg.find("t-") != std::string::npos);  // sample id prefix
    }
}

TEST_CASE("csv log shape") {
    auto c = make_corpus(Mode::single_turn, 1, 7);
    auto params = tinylm::init_params(small_config(c.vocab.size()));
    auto log = trainer::train(quick_config(Mode::single_turn, 5), c.dialogues, params);
    std::istringstream in(log.to_csv());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,loss,loss_prior,loss_verdict,grad_norm,seconds");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);
}
