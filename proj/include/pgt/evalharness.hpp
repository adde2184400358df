#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgt/dialogue.hpp"
#include "pgt/inference.hpp"
#include "pgt/synthworld.hpp"

namespace pgt::evalharness {

// Mann-Whitney AUROC with half-credit ties, via a sort-and-rank pass.
// Throws when either class is empty (undefined, reported as absent upstream).
double auroc(std::span<const double> pos_scores, std::span<const double> neg_scores);

// tf-idf cosine over a bag of words, as the offline stand-in for a sentence
// embedding similarity. Weights are non-negative so the cosine lies in [0, 1].
class TfIdfCorpus {
public:
    static TfIdfCorpus build(const std::vector<std::string>& ground_truths);
    double similarity(const std::string& a, const std::string& b) const;
    double idf(const std::string& word) const;

private:
    std::map<std::string, int> df_;
    int n_docs_ = 0;
};

struct JudgeRequest {
    std::string prediction;    // full predicted verdict text
    std::string ground_truth;  // canonical verdict text for the sample
    std::string rubric;
};

struct JudgeResponse {
    double score = 0.0;  // clamped to [0, 1]
    std::string rationale;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual JudgeResponse score(const JudgeRequest& req) = 0;
};

// Deterministic offline judge: 1.0 when the verdict matches and the anomaly
// clause names the right failure mode, 0.5 when only the verdict matches,
// 0.0 otherwise.
class StubJudge : public JudgeClient {
public:
    JudgeResponse score(const JudgeRequest& req) override;
};

struct RemoteJudgeError : std::runtime_error {
    RemoteJudgeError(const std::string& msg, int retries)
        : std::runtime_error(msg + " (after " + std::to_string(retries) + " retries)"),
          retries(retries) {}
    int retries;
};

// POSTs {model, rubric, prediction, ground_truth} as JSON and expects
// {score, rationale?} back. Bearer token comes from PGT_JUDGE_TOKEN.
class RemoteJudge : public JudgeClient {
public:
    RemoteJudge(std::string endpoint, std::string model, int max_retries = 2,
                int timeout_seconds = 30);
    JudgeResponse score(const JudgeRequest& req) override;

private:
    std::string endpoint_;
    std::string model_;
    int max_retries_;
    int timeout_seconds_;
};

// Reconstruction of the two scoring criteria the external judge applies.
std::string default_rubric();

struct CategoryMetrics {
    std::optional<double> auroc;  // absent when a class is missing
    double similarity_mean = 0.0;
    double judge_mean = 0.0;
    double unparseable_rate = 0.0;
    int n = 0;
};

struct MetricsReport {
    dialogue::Mode mode = dialogue::Mode::multi_turn;
    std::map<std::string, CategoryMetrics> per_category;
    CategoryMetrics average;  // unweighted mean over categories
    std::string config_hash;
    uint64_t seed = 0;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    std::string render_table() const;
};

double explanation_similarity(const std::string& pred, const std::string& gt,
                              const TfIdfCorpus& corpus);

MetricsReport evaluate(const std::vector<inference::VerdictRecord>& predictions,
                       const std::vector<synthworld::VideoSample>& dataset, JudgeClient& judge,
                       dialogue::Mode mode, const std::string& config_hash = {},
                       uint64_t seed = 0);

}  // namespace pgt::evalharness
