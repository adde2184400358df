#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgt/dialogue.hpp"
#include "pgt/tinylm.hpp"

namespace pgt::inference {

struct VerdictRecord {
    std::string id;
    int label = 0;       // ground truth, carried through for evaluation
    int pred_label = 0;  // parsed verdict, or 1[score >= 0.5] on parse failure
    double score = 0.0;  // P(anomalous) from the verdict-token distribution
    std::string explanation;  // predicted reason, empty on parse failure
    std::string raw_text;     // full generated answer
    bool parse_ok = false;
};

// Greedy argmax continuation; stops at EOT, EOS, or max_new tokens.
// Ties break toward the lowest token id.
std::vector<int> generate(const tinylm::ParameterStore& params, std::span<const int> prefix,
                          int max_new = 48);

// Two-way renormalized probability of the word "anomalous" against "normal".
double anomaly_score(std::span<const double> logits, const dialogue::Vocab& vocab);

// Scans for "verdict" then {normal|anomalous} then "reason"; remainder is the
// explanation. Case and punctuation insensitive.
std::optional<std::pair<int, std::string>> parse_verdict(const std::string& text);

VerdictRecord run_grounded_inference(const tinylm::ParameterStore& params,
                                     const synthworld::VideoSample& sample,
                                     const priors::PhysicsPrior& prior,
                                     const priors::QuestionSet& q, dialogue::Mode mode,
                                     const dialogue::Vocab& vocab, int max_new = 48);

std::string prediction_line(const VerdictRecord& r);
VerdictRecord parse_prediction_line(const std::string& line);
std::string to_jsonl(const std::vector<VerdictRecord>& rs);
std::vector<VerdictRecord> from_jsonl(const std::string& text);

}  // namespace pgt::inference
