#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace medbridge::text {

// Decodes UTF-8 into code points. Invalid bytes decode as U+FFFD one byte at
// a time so that tokenization never throws on dirty corpora.
std::vector<char32_t> decode_utf8(std::string_view s);

std::string encode_utf8(char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

bool is_cjk(char32_t cp);

// Normalization used for term de-duplication: full-width forms folded to
// ASCII, whitespace collapsed away, punctuation stripped, Latin lowercased.
std::string normalize_term(std::string_view s);

struct TokenizerConfig {
    // Multi-character CJK terms to keep as single tokens (longest match wins).
    std::vector<std::string> merges;
    bool lowercase_latin = true;
};

// Whitespace tokenization for Latin runs; per-character for CJK runs, with
// the configured merge list applied greedily.
std::vector<std::string> tokenize(std::string_view line, const TokenizerConfig& cfg);

}  // namespace medbridge::text
