#include "pgt/inference.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

#include "pgt/text.hpp"

namespace pgt::inference {

std::vector<int> generate(const tinylm::ParameterStore& params, std::span<const int> prefix,
                          int max_new) {
    std::vector<int> ids(prefix.begin(), prefix.end());
    std::vector<int> out;
    for (int n = 0; n < max_new; ++n) {
        if (static_cast<int>(ids.size()) >= params.cfg.context_len)
            throw std::invalid_argument("generate: context overflow");
        tinylm::ForwardTrace tr = tinylm::forward(params, ids);
        auto row = tr.logits.row(static_cast<int>(ids.size()) - 1);
        int best = 0;
        for (int i = 1; i < params.cfg.vocab_size; ++i)
            if (row(i) > row(best)) best = i;  // first max wins, i.e. lowest id on ties
        out.push_back(best);
        ids.push_back(best);
        if (best == dialogue::Vocab::EOT || best == dialogue::Vocab::EOS) break;
    }
    return out;
}

double anomaly_score(std::span<const double> logits, const dialogue::Vocab& vocab) {
    double la = logits[static_cast<size_t>(vocab.word_id("anomalous"))];
    double ln = logits[static_cast<size_t>(vocab.word_id("normal"))];
    double m = std::max(la, ln);
    double ea = std::exp(la - m), en = std::exp(ln - m);
    return ea / (ea + en);
}

std::optional<std::pair<int, std::string>> parse_verdict(const std::string& textin) {
    auto words = text::split_words(textin);
    size_t i = 0;
    while (i < words.size() && words[i] != "verdict") ++i;
    if (i == words.size()) return std::nullopt;
    int label = -1;
    for (++i; i < words.size(); ++i) {
        if (words[i] == "normal") { label = 0; break; }
        if (words[i] == "anomalous") { label = 1; break; }
    }
    if (label < 0) return std::nullopt;
    while (i < words.size() && words[i] != "reason") ++i;
    std::vector<std::string> rest(i < words.size() ? words.begin() + static_cast<long>(i) + 1
                                                   : words.end(),
                                  words.end());
    return std::make_pair(label, text::join_words(rest));
}

VerdictRecord run_grounded_inference(const tinylm::ParameterStore& params,
                                     const synthworld::VideoSample& sample,
                                     const priors::PhysicsPrior& prior,
                                     const priors::QuestionSet& q, dialogue::Mode mode,
                                     const dialogue::Vocab& vocab, int max_new) {
    // The training-time layout is the inference prefix contract: compile the
    // sample exactly as the trainer saw its category, then cut before the
    // final answer. Tokens past the cut never reach the model.
    dialogue::DialogueSample d =
        dialogue::compile_dialogue(sample, prior, q, mode, vocab, params.cfg.context_len);
    const int answer_start = d.turn_spans.back().first;

    VerdictRecord rec;
    rec.id = sample.id;
    rec.label = sample.label;

    // anomaly score: teacher-force the target prefix through the "verdict"
    // word and read the two-way distribution at the verdict slot
    {
        std::vector<int> score_prefix(d.ids.begin(), d.ids.begin() + d.verdict_pos);
        tinylm::ForwardTrace tr = tinylm::forward(params, score_prefix);
        auto row = tr.logits.row(static_cast<int>(score_prefix.size()) - 1);
        rec.score = anomaly_score(std::span<const double>(row.data(), static_cast<size_t>(row.size())),
                                  vocab);
    }

    std::vector<int> gen_prefix(d.ids.begin(), d.ids.begin() + answer_start);
    std::vector<int> continuation = generate(params, gen_prefix, max_new);
    rec.raw_text = dialogue::detokenize(continuation, vocab);

    if (auto parsed = parse_verdict(rec.raw_text)) {
        rec.parse_ok = true;
        rec.pred_label = parsed->first;
        rec.explanation = parsed->second;
    } else {
        rec.parse_ok = false;
        rec.pred_label = rec.score >= 0.5 ? 1 : 0;
        rec.explanation.clear();
    }
    return rec;
}

std::string prediction_line(const VerdictRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["label"] = r.label;
    j["score"] = r.score;
    j["pred_label"] = r.pred_label;
    j["explanation"] = r.explanation;
    j["raw_text"] = r.raw_text;
    j["parse_ok"] = r.parse_ok;
    return j.dump();
}

VerdictRecord parse_prediction_line(const std::string& line) {
    auto j = nlohmann::json::parse(line);
    VerdictRecord r;
    r.id = j.at("id").get<std::string>();
    r.label = j.at("label").get<int>();
    r.score = j.at("score").get<double>();
    r.pred_label = j.at("pred_label").get<int>();
    r.explanation = j.at("explanation").get<std::string>();
    r.raw_text = j.at("raw_text").get<std::string>();
    r.parse_ok = j.at("parse_ok").get<bool>();
    return r;
}

std::string to_jsonl(const std::vector<VerdictRecord>& rs) {
    std::string out;
    for (const auto& r : rs) {
        out += prediction_line(r);
        out += '\n';
    }
    return out;
}

std::vector<VerdictRecord> from_jsonl(const std::string& textin) {
    std::vector<VerdictRecord> out;
    std::istringstream in(textin);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_prediction_line(line));
    }
    return out;
}

}  // namespace pgt::inference
