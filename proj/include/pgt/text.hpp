#pragma once

#include <cctype>
#include <string>
#include <vector>

namespace pgt::text {

// Lowercases, splits on whitespace, and strips sentence punctuation
// (. : , ; ! ?), which carries no content in this closed corpus.
inline std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : s) {
        if (std::isspace(c) || c == '.' || c == ':' || c == ',' || c == ';' || c == '!' ||
            c == '?') {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return words;
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

// Canonical form: lowercase words separated by single spaces.
inline std::string normalize(const std::string& s) { return join_words(split_words(s)); }

}  // namespace pgt::text
