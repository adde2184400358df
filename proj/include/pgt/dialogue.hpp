#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgt/priors.hpp"
#include "pgt/synthworld.hpp"

namespace pgt::dialogue {

enum class Mode { multi_turn, single_turn, no_phys };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct UnknownWordError : std::runtime_error {
    explicit UnknownWordError(const std::string& w)
        : std::runtime_error("word not in vocabulary: '" + w + "'"), word(w) {}
    std::string word;
};

class Vocab {
public:
    static constexpr int PAD = 0;
    static constexpr int BOS = 1;
    static constexpr int EOS = 2;
    static constexpr int USER = 3;
    static constexpr int ASSISTANT = 4;
    static constexpr int EOT = 5;
    static constexpr int VID_START = 6;
    static constexpr int VID_END = 7;
    static constexpr int NUM_SPECIALS = 8;

    Vocab() = default;
    Vocab(int bins, std::vector<std::string> words);

    int size() const { return static_cast<int>(tokens_.size()); }
    int bins() const { return bins_; }
    int bin_token(int b) const;
    bool is_bin_token(int id) const { return id >= NUM_SPECIALS && id < NUM_SPECIALS + bins_; }
    int first_word_id() const { return NUM_SPECIALS + bins_; }

    int word_id(const std::string& w) const;  // throws UnknownWordError
    bool has_word(const std::string& w) const { return index_.count(w) > 0; }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
    std::set<std::string> word_set() const;
    uint64_t hash() const;

private:
    int bins_ = 0;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

Vocab build_vocab(const std::vector<synthworld::CategorySpec>& world,
                  const priors::KnowledgeBase& kb, const priors::QuestionSet& q, int bins);

std::vector<int> tokenize(const std::string& s, const Vocab& vocab);
std::string detokenize(std::span<const int> ids, const Vocab& vocab);

// phi(y, E): the canonical final-answer string.
std::string format_verdict(int label, const std::string& explanation);

struct DialogueSample {
    std::string id;
    Mode mode = Mode::multi_turn;
    std::vector<int> ids;
    std::vector<uint8_t> mask;  // 1 = position contributes to the loss
    std::vector<std::pair<int, int>> turn_spans;  // answer spans [start, end), EOT included
    int verdict_pos = -1;  // index of the normal/anomalous word token
    int label = 0;
    std::string explanation;
};

struct CompileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

DialogueSample compile_dialogue(const synthworld::VideoSample& sample,
                                const priors::PhysicsPrior& prior, const priors::QuestionSet& q,
                                Mode mode, const Vocab& vocab, int context_limit = 512);

// Masked tokens in the verdict sentence over all masked tokens.
double verdict_loss_share(const DialogueSample& d);

std::string dialogue_line(const DialogueSample& d);
DialogueSample parse_dialogue_line(const std::string& line);
std::string to_jsonl(const std::vector<DialogueSample>& ds);
std::vector<DialogueSample> from_jsonl(const std::string& text);

// Human-readable rendering for the audit transcript sidecar.
std::string render_transcript(const DialogueSample& d, const Vocab& vocab);

}  // namespace pgt::dialogue
