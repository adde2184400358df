#include "pgt/evalharness.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "pgt/text.hpp"

namespace pgt::evalharness {

double auroc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
    if (pos_scores.empty() || neg_scores.empty())
        throw std::invalid_argument("auroc: undefined with an empty class");
    struct Item {
        double score;
        int label;
    };
    std::vector<Item> items;
    items.reserve(pos_scores.size() + neg_scores.size());
    for (double s : pos_scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("auroc: non-finite score");
        items.push_back({s, 1});
    }
    for (double s : neg_scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("auroc: non-finite score");
        items.push_back({s, 0});
    }
    std::sort(items.begin(), items.end(),
              [](const Item& a, const Item& b) { return a.score < b.score; });

    // average ranks across tie groups; rank sums stay exact in doubles at this scale
    const size_t n = items.size();
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && items[j].score == items[i].score) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // (i+1 + j) / 2, 1-based
        for (size_t k = i; k < j; ++k)
            if (items[k].label == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    double n1 = static_cast<double>(pos_scores.size());
    double n0 = static_cast<double>(neg_scores.size());
    double u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
    return u / (n1 * n0);
}

TfIdfCorpus TfIdfCorpus::build(const std::vector<std::string>& ground_truths) {
    TfIdfCorpus c;
    c.n_docs_ = static_cast<int>(ground_truths.size());
    for (const auto& doc : ground_truths) {
        std::set<std::string> seen;
        for (const auto& w : text::split_words(doc)) seen.insert(w);
        for (const auto& w : seen) c.df_[w] += 1;
    }
    return c;
}

double TfIdfCorpus::idf(const std::string& word) const {
    auto it = df_.find(word);
    int df = it == df_.end() ? 0 : it->second;
    return std::log((1.0 + n_docs_) / (1.0 + df)) + 1.0;
}

double TfIdfCorpus::similarity(const std::string& a, const std::string& b) const {
    std::map<std::string, int> ca, cb;
    for (const auto& w : text::split_words(a)) ca[w] += 1;
    for (const auto& w : text::split_words(b)) cb[w] += 1;
    if (ca.empty() || cb.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [w, tf] : ca) {
        double va = tf * idf(w);
        na += va * va;
        auto it = cb.find(w);
        if (it != cb.end()) dot += va * (it->second * idf(w));
    }
    for (const auto& [w, tf] : cb) {
        double vb = tf * idf(w);
        nb += vb * vb;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double explanation_similarity(const std::string& pred, const std::string& gt,
                              const TfIdfCorpus& corpus) {
    return corpus.similarity(pred, gt);
}

namespace {

const std::map<std::string, std::set<std::string>>& anomaly_stems() {
    static const std::map<std::string, std::set<std::string>> stems = {
        {"stall", {"stops", "stop", "stopped", "frozen", "freezes", "stall", "stalls", "stalled"}},
        {"reverse", {"opposite", "reverse", "reversed", "backward", "backwards"}},
        {"jitter", {"shakes", "shaking", "erratic", "erratically", "jitter", "jitters"}},
        {"skip", {"jumps", "jump", "discontinuously", "skip", "skips", "skipping"}},
        {"drift", {"faster", "drift", "drifts", "accelerates"}},
    };
    return stems;
}

std::string detect_anomaly_type(const std::string& textin) {
    auto words = text::split_words(textin);
    std::set<std::string> wset(words.begin(), words.end());
    for (const auto& [type, stems] : anomaly_stems())
        for (const auto& s : stems)
            if (wset.count(s)) return type;
    return "";
}

}  // namespace

JudgeResponse StubJudge::score(const JudgeRequest& req) {
    auto gt = inference::parse_verdict(req.ground_truth);
    if (!gt) return {0.0, "ground truth not in verdict format"};
    auto pred = inference::parse_verdict(req.prediction);
    if (!pred) return {0.0, "prediction has no parseable verdict"};
    if (pred->first != gt->first) return {0.0, "verdict mismatch"};
    if (gt->first == 0) return {1.0, "verdict matches (normal)"};
    std::string want = detect_anomaly_type(gt->second);
    std::string got = detect_anomaly_type(pred->second);
    if (!want.empty() && want == got) return {1.0, "verdict and anomaly type match"};
    return {0.5, "verdict matches, anomaly type does not"};
}

RemoteJudge::RemoteJudge(std::string endpoint, std::string model, int max_retries,
                         int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      max_retries_(max_retries),
      timeout_seconds_(timeout_seconds) {}

JudgeResponse RemoteJudge::score(const JudgeRequest& req) {
    // split endpoint into base url and path
    std::string base = endpoint_, path = "/";
    auto scheme = endpoint_.find("://");
    auto slash = endpoint_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        base = endpoint_.substr(0, slash);
        path = endpoint_.substr(slash);
    }
    nlohmann::ordered_json body;
    body["model"] = model_;
    body["rubric"] = req.rubric;
    body["prediction"] = req.prediction;
    body["ground_truth"] = req.ground_truth;
    std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* token = std::getenv("PGT_JUDGE_TOKEN"))
        headers.emplace("Authorization", std::string("Bearer ") + token);

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        httplib::Client client(base);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "judge returned HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            JudgeResponse out;
            out.score = std::clamp(j.at("score").get<double>(), 0.0, 1.0);
            out.rationale = j.value("rationale", std::string());
            return out;
        } catch (const std::exception& e) {
            last_error = std::string("malformed judge response: ") + e.what();
        }
    }
    throw RemoteJudgeError(last_error, max_retries_);
}

std::string default_rubric() {
    return "score the predicted verdict against the reference from 0 to 1 : "
           "award full credit only when the stated anomaly type is correct "
           "and the reasoning follows logically from the expected motion ; "
           "award half credit when the verdict is right but the anomaly type "
           "or reasoning is wrong ; award zero otherwise";
}

MetricsReport evaluate(const std::vector<inference::VerdictRecord>& predictions,
                       const std::vector<synthworld::VideoSample>& dataset, JudgeClient& judge,
                       dialogue::Mode mode, const std::string& config_hash, uint64_t seed) {
    std::map<std::string, const inference::VerdictRecord*> by_id;
    for (const auto& p : predictions) by_id[p.id] = &p;
    std::vector<std::string> missing;
    for (const auto& v : dataset)
        if (!by_id.count(v.id)) missing.push_back(v.id);
    if (!missing.empty()) {
        std::string msg = "evaluate: missing predictions for:";
        for (const auto& id : missing) msg += " " + id;
        throw std::invalid_argument(msg);
    }

    std::vector<std::string> gts;
    gts.reserve(dataset.size());
    for (const auto& v : dataset) gts.push_back(text::normalize(v.explanation));
    TfIdfCorpus corpus = TfIdfCorpus::build(gts);
    const std::string rubric = default_rubric();

    struct Bucket {
        std::vector<double> pos, neg;
        double sim_sum = 0.0, judge_sum = 0.0;
        int unparseable = 0, n = 0;
    };
    std::map<std::string, Bucket> buckets;
    for (const auto& v : dataset) {
        const auto& p = *by_id.at(v.id);
        Bucket& b = buckets[v.category];
        b.n += 1;
        (v.label == 1 ? b.pos : b.neg).push_back(p.score);
        b.sim_sum += explanation_similarity(p.explanation, v.explanation, corpus);
        JudgeRequest req{p.raw_text, dialogue::format_verdict(v.label, v.explanation), rubric};
        b.judge_sum += judge.score(req).score;
        b.unparseable += p.parse_ok ? 0 : 1;
    }

    MetricsReport report;
    report.mode = mode;
    report.config_hash = config_hash;
    report.seed = seed;
    double auroc_sum = 0.0, sim_sum = 0.0, judge_sum = 0.0, unp_sum = 0.0;
    int auroc_count = 0, total_n = 0;
    for (const auto& [cat, b] : buckets) {
        CategoryMetrics m;
        if (!b.pos.empty() && !b.neg.empty()) {
            m.auroc = auroc(b.pos, b.neg);
            auroc_sum += *m.auroc;
            auroc_count += 1;
        }
        m.similarity_mean = b.sim_sum / b.n;
        m.judge_mean = b.judge_sum / b.n;
        m.unparseable_rate = static_cast<double>(b.unparseable) / b.n;
        m.n = b.n;
        sim_sum += m.similarity_mean;
        judge_sum += m.judge_mean;
        unp_sum += m.unparseable_rate;
        total_n += b.n;
        report.per_category[cat] = m;
    }
    const double k = static_cast<double>(report.per_category.size());
    if (k > 0) {
        if (auroc_count > 0) report.average.auroc = auroc_sum / auroc_count;
        report.average.similarity_mean = sim_sum / k;
        report.average.judge_mean = judge_sum / k;
        report.average.unparseable_rate = unp_sum / k;
        report.average.n = total_n;
    }
    return report;
}

namespace {

nlohmann::ordered_json metrics_json(const CategoryMetrics& m) {
    nlohmann::ordered_json j;
    if (m.auroc)
        j["auroc"] = *m.auroc;
    else
        j["auroc"] = nullptr;
    j["similarity_mean"] = m.similarity_mean;
    j["judge_mean"] = m.judge_mean;
    j["unparseable_rate"] = m.unparseable_rate;
    j["n"] = m.n;
    return j;
}

CategoryMetrics metrics_from_json(const nlohmann::json& j) {
    CategoryMetrics m;
    if (!j.at("auroc").is_null()) m.auroc = j.at("auroc").get<double>();
    m.similarity_mean = j.at("similarity_mean").get<double>();
    m.judge_mean = j.at("judge_mean").get<double>();
    m.unparseable_rate = j.at("unparseable_rate").get<double>();
    m.n = j.at("n").get<int>();
    return m;
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = dialogue::mode_name(mode);
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    auto cats = nlohmann::ordered_json::object();
    for (const auto& [cat, m] : per_category) cats[cat] = metrics_json(m);
    j["per_category"] = cats;
    j["average"] = metrics_json(average);
    // full-scale reference averages, shown for context and never asserted
    j["reference_full_scale"] = {{"auroc", 0.967}, {"sbert", 0.824}, {"llm", 0.777}};
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& textin) {
    auto j = nlohmann::json::parse(textin);
    MetricsReport r;
    r.mode = dialogue::mode_from_name(j.at("mode").get<std::string>());
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    for (auto it = j.at("per_category").begin(); it != j.at("per_category").end(); ++it)
        r.per_category[it.key()] = metrics_from_json(it.value());
    r.average = metrics_from_json(j.at("average"));
    return r;
}

std::string MetricsReport::render_table() const {
    std::ostringstream out;
    char buf[160];
    out << "mode: " << dialogue::mode_name(mode) << "\n";
    std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %8s %10s %6s\n", "category", "auroc", "sbert",
                  "llm", "unparse", "n");
    out << buf;
    auto row = [&](const std::string& name, const CategoryMetrics& m) {
        std::string a = m.auroc ? [&] {
            char b2[16];
            std::snprintf(b2, sizeof(b2), "%.3f", *m.auroc);
            return std::string(b2);
        }() : std::string("-");
        std::snprintf(buf, sizeof(buf), "%-12s %8s %8.3f %8.3f %10.3f %6d\n", name.c_str(),
                      a.c_str(), m.similarity_mean, m.judge_mean, m.unparseable_rate, m.n);
        out << buf;
    };
    for (const auto& [cat, m] : per_category) row(cat, m);
    row("Average", average);
    out << "reference full-scale averages (context only): auroc 0.967, sbert 0.824, llm 0.777\n";
    return out.str();
}

}  // namespace pgt::evalharness
