#include "pgt/priors.hpp"

#include <json.hpp>

#include <stdexcept>

#include "pgt/common.hpp"
#include "pgt/text.hpp"

namespace pgt::priors {

QuestionSet QuestionSet::defaults() {
    QuestionSet q;
    q.q1 = "describe the key component shown in the video";
    q.q2 = "describe the dynamic subject and its physical properties";
    q.q3 = "describe the expected motion of this object";
    q.q4 = "state your verdict about the video and the reason";
    return q;
}

KnowledgeBase KnowledgeBase::defaults() {
    KnowledgeBase kb;
    auto add = [&](const char* cat, const char* com, const char* dyn, const char* mot) {
        kb.priors_[cat] = PhysicsPrior{cat, com, dyn, mot};
    };
    add("wheel",
        "the wheel has an axle bearing",
        "the axle spins at a steady rate",
        "the axle should rotate continuously and steadily");
    add("pendulum",
        "the pendulum has a suspended bob",
        "the bob swings freely under gravity",
        "the bob should oscillate smoothly and regularly");
    add("slider",
        "the slider has a carriage on a rail",
        "the carriage glides at a constant speed",
        "the carriage should travel steadily between the rail ends");
    add("clip",
        "the clip has a spring mechanism",
        "the spring should deform under force and rebound",
        "the spring should make the jaws open when pressed and close when released");
    add("clock",
        "the clock has a hand and an escapement",
        "the hand advances in discrete ticks",
        "the hand should step forward regularly around the dial");
    return kb;
}

KnowledgeBase KnowledgeBase::with_overrides_json(const std::string& json_text) {
    KnowledgeBase kb = defaults();
    auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw std::runtime_error("knowledge base file must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& v = it.value();
        PhysicsPrior p;
        p.category = it.key();
        p.s_com = v.at("s_com").get<std::string>();
        p.s_dyn = v.at("s_dyn").get<std::string>();
        p.s_mot = v.at("s_mot").get<std::string>();
        kb.priors_[p.category] = std::move(p);
    }
    return kb;
}

KnowledgeBase KnowledgeBase::with_overrides_file(const std::string& path) {
    return with_overrides_json(read_file(path));
}

const PhysicsPrior& KnowledgeBase::prior_for(const std::string& category) const {
    auto it = priors_.find(category);
    if (it == priors_.end()) throw std::out_of_range("no physics prior for category: " + category);
    return it->second;
}

std::vector<std::string> validate_prior(const PhysicsPrior& prior, const std::string& part,
                                        const std::set<std::string>& vocab_words) {
    std::vector<std::string> violations;
    auto contains_word = [](const std::string& s, const std::string& w) {
        for (const auto& tok : text::split_words(s))
            if (tok == w) return true;
        return false;
    };
    if (prior.s_com.empty()) violations.push_back("s_com empty");
    if (prior.s_dyn.empty()) violations.push_back("s_dyn empty");
    if (prior.s_mot.empty()) violations.push_back("s_mot empty");
    if (!prior.s_com.empty() && !contains_word(prior.s_com, prior.category))
        violations.push_back("s_com does not mention category '" + prior.category + "'");
    if (!prior.s_dyn.empty() && !contains_word(prior.s_dyn, part))
        violations.push_back("s_dyn does not mention part '" + part + "'");
    if (!prior.s_mot.empty() && !contains_word(prior.s_mot, part))
        violations.push_back("s_mot does not mention part '" + part + "'");
    for (const std::string* field : {&prior.s_com, &prior.s_dyn, &prior.s_mot}) {
        for (const auto& w : text::split_words(*field)) {
            if (!vocab_words.count(w)) violations.push_back("word not in vocabulary: '" + w + "'");
        }
    }
    return violations;
}

}  // namespace pgt::priors
