#include "pgt/dialogue.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "pgt/common.hpp"
#include "pgt/text.hpp"

namespace pgt::dialogue {

namespace {

const char* kSpecialNames[Vocab::NUM_SPECIALS] = {"<pad>", "<bos>", "<eos>", "<user>",
                                                  "<assistant>", "<eot>", "<vid>", "</vid>"};

}  // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::multi_turn: return "multi_turn";
        case Mode::single_turn: return "single_turn";
        case Mode::no_phys: return "no_phys";
    }
    throw std::logic_error("bad mode");
}

Mode mode_from_name(const std::string& s) {
    if (s == "multi_turn") return Mode::multi_turn;
    if (s == "single_turn") return Mode::single_turn;
    if (s == "no_phys") return Mode::no_phys;
    throw std::invalid_argument("unknown mode: " + s);
}

Vocab::Vocab(int bins, std::vector<std::string> words) : bins_(bins) {
    tokens_.reserve(NUM_SPECIALS + bins + words.size());
    for (const char* s : kSpecialNames) tokens_.emplace_back(s);
    for (int b = 0; b < bins; ++b) tokens_.push_back("<bin_" + std::to_string(b) + ">");
    for (auto& w : words) tokens_.push_back(std::move(w));
    for (int i = first_word_id(); i < size(); ++i) index_[tokens_[static_cast<size_t>(i)]] = i;
}

int Vocab::bin_token(int b) const {
    if (b < 0 || b >= bins_) throw std::out_of_range("bin index outside [0, bins)");
    return NUM_SPECIALS + b;
}

int Vocab::word_id(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) throw UnknownWordError(w);
    return it->second;
}

std::set<std::string> Vocab::word_set() const {
    std::set<std::string> out;
    for (int i = first_word_id(); i < size(); ++i) out.insert(tokens_[static_cast<size_t>(i)]);
    return out;
}

uint64_t Vocab::hash() const {
    uint64_t h = fnv1a64("vocab/" + std::to_string(bins_));
    for (const auto& t : tokens_) {
        h = fnv1a64(t, h);
        h = fnv1a64("\x1f", h);
    }
    return h;
}

Vocab build_vocab(const std::vector<synthworld::CategorySpec>& world,
                  const priors::KnowledgeBase& kb, const priors::QuestionSet& q, int bins) {
    std::set<std::string> words;
    auto add_text = [&](const std::string& s) {
        for (const auto& w : text::split_words(s)) words.insert(w);
    };
    add_text(q.q1);
    add_text(q.q2);
    add_text(q.q3);
    add_text(q.q4);
    for (const auto& cat : world) {
        add_text(cat.name);
        add_text(cat.part);
        // every renderable explanation and its verdict wrapping
        using synthworld::Anomaly;
        for (Anomaly a : {Anomaly::none, Anomaly::stall, Anomaly::reverse, Anomaly::jitter,
                          Anomaly::skip, Anomaly::drift}) {
            std::string e = synthworld::render_explanation(cat, a);
            add_text(format_verdict(a == Anomaly::none ? 0 : 1, e));
        }
    }
    for (const auto& [name, prior] : kb.all()) {
        add_text(prior.s_com);
        add_text(prior.s_dyn);
        add_text(prior.s_mot);
    }
    return Vocab(bins, std::vector<std::string>(words.begin(), words.end()));
}

std::vector<int> tokenize(const std::string& s, const Vocab& vocab) {
    std::vector<int> ids;
    for (const auto& w : text::split_words(s)) ids.push_back(vocab.word_id(w));
    return ids;
}

std::string detokenize(std::span<const int> ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < vocab.first_word_id()) continue;  // specials and bin tokens carry no words
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

std::string format_verdict(int label, const std::string& explanation) {
    if (explanation.empty()) throw std::invalid_argument("format_verdict: explanation is empty");
    std::string verdict = label == 1 ? "anomalous" : "normal";
    return "verdict : " + verdict + " . reason : " + text::normalize(explanation);
}

namespace {

void append_tokens(std::vector<int>& ids, const std::vector<int>& more) {
    ids.insert(ids.end(), more.begin(), more.end());
}

void append_video(std::vector<int>& ids, const synthworld::VideoSample& v, const Vocab& vocab) {
    ids.push_back(Vocab::VID_START);
    for (int b : v.frames) ids.push_back(vocab.bin_token(b));
    ids.push_back(Vocab::VID_END);
}

}  // namespace

DialogueSample compile_dialogue(const synthworld::VideoSample& sample,
                                const priors::PhysicsPrior& prior, const priors::QuestionSet& q,
                                Mode mode, const Vocab& vocab, int context_limit) {
    if (sample.category != prior.category)
        throw std::invalid_argument("compile_dialogue: sample category '" + sample.category +
                                    "' does not match prior category '" + prior.category + "'");

    DialogueSample d;
    d.id = sample.id;
    d.mode = mode;
    d.label = sample.label;
    d.explanation = text::normalize(sample.explanation);

    const std::string verdict_text = format_verdict(sample.label, sample.explanation);
    auto& ids = d.ids;
    ids.push_back(Vocab::BOS);

    auto emit_answer = [&](const std::vector<int>& answer_tokens) {
        ids.push_back(Vocab::ASSISTANT);
        int start = static_cast<int>(ids.size());
        append_tokens(ids, answer_tokens);
        ids.push_back(Vocab::EOT);
        d.turn_spans.emplace_back(start, static_cast<int>(ids.size()));
    };

    if (mode == Mode::multi_turn) {
        const std::string* questions[4] = {&q.q1, &q.q2, &q.q3, &q.q4};
        const std::string answers[4] = {prior.s_com, prior.s_dyn, prior.s_mot, verdict_text};
        for (int i = 0; i < 4; ++i) {
            ids.push_back(Vocab::USER);
            append_tokens(ids, tokenize(*questions[i], vocab));
            if (i == 0) append_video(ids, sample, vocab);
            emit_answer(tokenize(answers[i], vocab));
        }
    } else {
        ids.push_back(Vocab::USER);
        append_tokens(ids, tokenize(q.q1, vocab));
        append_video(ids, sample, vocab);
        append_tokens(ids, tokenize(q.q4, vocab));
        std::vector<int> answer;
        if (mode == Mode::single_turn) {
            append_tokens(answer, tokenize(prior.s_com, vocab));
            append_tokens(answer, tokenize(prior.s_dyn, vocab));
            append_tokens(answer, tokenize(prior.s_mot, vocab));
        }
        append_tokens(answer, tokenize(verdict_text, vocab));
        emit_answer(answer);
    }
    ids.push_back(Vocab::EOS);

    d.mask.assign(ids.size(), 0);
    for (auto [s, e] : d.turn_spans)
        for (int p = s; p < e; ++p) d.mask[static_cast<size_t>(p)] = 1;

    // the {normal|anomalous} token inside the final answer span
    const int normal_id = vocab.word_id("normal");
    const int anomalous_id = vocab.word_id("anomalous");
    auto [fs, fe] = d.turn_spans.back();
    for (int p = fs; p < fe; ++p) {
        if (ids[static_cast<size_t>(p)] == normal_id || ids[static_cast<size_t>(p)] == anomalous_id) {
            d.verdict_pos = p;
            break;
        }
    }
    if (d.verdict_pos < 0) throw std::logic_error("compile_dialogue: verdict token not found");

    if (static_cast<int>(ids.size()) > context_limit)
        throw CompileError("compiled dialogue for '" + sample.id + "' has " +
                           std::to_string(ids.size()) + " tokens, context limit is " +
                           std::to_string(context_limit));
    return d;
}

double verdict_loss_share(const DialogueSample& d) {
    int total = 0;
    for (uint8_t m : d.mask) total += m;
    if (total == 0) throw std::invalid_argument("verdict_loss_share: empty mask");
    auto [fs, fe] = d.turn_spans.back();
    // verdict sentence: from the "verdict" word through the end of the answer
    int vstart = d.verdict_pos - 1;  // the word before {normal|anomalous} is "verdict"
    int verdict_tokens = 0;
    for (int p = vstart; p < fe; ++p) verdict_tokens += d.mask[static_cast<size_t>(p)];
    return static_cast<double>(verdict_tokens) / static_cast<double>(total);
}

std::string dialogue_line(const DialogueSample& d) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["mode"] = mode_name(d.mode);
    j["ids"] = d.ids;
    j["mask"] = std::vector<int>(d.mask.begin(), d.mask.end());
    auto spans = nlohmann::ordered_json::array();
    for (auto [s, e] : d.turn_spans) spans.push_back({s, e});
    j["turn_spans"] = spans;
    j["verdict_pos"] = d.verdict_pos;
    j["label"] = d.label;
    j["explanation"] = d.explanation;
    return j.dump();
}

DialogueSample parse_dialogue_line(const std::string& line) {
    auto j = nlohmann::json::parse(line);
    DialogueSample d;
    d.id = j.at("id").get<std::string>();
    d.mode = mode_from_name(j.at("mode").get<std::string>());
    d.ids = j.at("ids").get<std::vector<int>>();
    for (int m : j.at("mask").get<std::vector<int>>()) d.mask.push_back(static_cast<uint8_t>(m));
    for (const auto& s : j.at("turn_spans")) d.turn_spans.emplace_back(s.at(0), s.at(1));
    d.verdict_pos = j.at("verdict_pos").get<int>();
    d.label = j.at("label").get<int>();
    d.explanation = j.at("explanation").get<std::string>();
    return d;
}

std::string to_jsonl(const std::vector<DialogueSample>& ds) {
    std::string out;
    for (const auto& d : ds) {
        out += dialogue_line(d);
        out += '\n';
    }
    return out;
}

std::vector<DialogueSample> from_jsonl(const std::string& textin) {
    std::vector<DialogueSample> out;
    std::istringstream in(textin);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_dialogue_line(line));
    }
    return out;
}

std::string render_transcript(const DialogueSample& d, const Vocab& vocab) {
    std::ostringstream out;
    out << "=== " << d.id << " (" << mode_name(d.mode) << ", label " << d.label << ")\n";
    for (size_t i = 0; i < d.ids.size(); ++i) {
        int id = d.ids[i];
        if (id == Vocab::USER) out << "\nuser: ";
        else if (id == Vocab::ASSISTANT) out << "\nassistant: ";
        else if (id == Vocab::EOT || id == Vocab::EOS || id == Vocab::BOS) continue;
        else if (id == Vocab::VID_START) out << "[video ";
        else if (id == Vocab::VID_END) out << "] ";
        else if (vocab.is_bin_token(id)) out << (id - Vocab::NUM_SPECIALS) << ' ';
        else out << vocab.token(id) << ' ';
    }
    out << "\n";
    return out.str();
}

}  // namespace pgt::dialogue
