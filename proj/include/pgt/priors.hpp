#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace pgt::priors {

// Per-category knowledge tuple: component identity, dynamic subject
// properties, and the expected motion.
struct PhysicsPrior {
    std::string category;
    std::string s_com;
    std::string s_dyn;
    std::string s_mot;
};

// Fixed prompts, identical across categories.
struct QuestionSet {
    std::string q1;
    std::string q2;
    std::string q3;
    std::string q4;
    static QuestionSet defaults();
};

class KnowledgeBase {
public:
    static KnowledgeBase defaults();
    // JSON map category -> {s_com, s_dyn, s_mot}; entries override the defaults.
    static KnowledgeBase with_overrides_file(const std::string& path);
    static KnowledgeBase with_overrides_json(const std::string& json_text);

    const PhysicsPrior& prior_for(const std::string& category) const;
    const std::map<std::string, PhysicsPrior>& all() const { return priors_; }

private:
    std::map<std::string, PhysicsPrior> priors_;
};

// Checks the PhysicsPrior invariants; returns every violation found.
// `vocab_words` is the closed word list the dialogue tokenizer accepts.
std::vector<std::string> validate_prior(const PhysicsPrior& prior, const std::string& part,
                                        const std::set<std::string>& vocab_words);

}  // namespace pgt::priors
