#include "medbridge/text.hpp"

#include <algorithm>
#include <cctype>

namespace medbridge::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Returns the code point starting at s[i] and advances i. Malformed
// sequences consume one byte and yield U+FFFD.
char32_t next_cp(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return kReplacement;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return kReplacement;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return kReplacement;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

bool is_cjk_punct(char32_t cp) {
    switch (cp) {
        case 0x3001:  // 、
        case 0x3002:  // 。
        case 0x300A:  // 《
        case 0x300B:  // 》
        case 0x3008:
        case 0x3009:
        case 0x3010:
        case 0x3011:
        case 0x201C:
        case 0x201D:
        case 0x2018:
        case 0x2019:
        case 0x00B7:
        case 0x2014:
        case 0x2026:
            return true;
        default:
            return false;
    }
}

char32_t fold_width(char32_t cp) {
    if (cp == 0x3000) return 0x20;                       // ideographic space
    if (cp >= 0xFF01 && cp <= 0xFF5E) return cp - 0xFEE0;  // full-width ASCII block
    return cp;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) out.push_back(next_cp(s, i));
    return out;
}

std::string encode_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    for (char32_t cp : cps) out += encode_utf8(cp);
    return out;
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0xF900 && cp <= 0xFAFF);
}

std::string normalize_term(std::string_view s) {
    std::string out;
    for (char32_t cp : decode_utf8(s)) {
        cp = fold_width(cp);
        if (cp <= 0x7F) {
            const auto c = static_cast<unsigned char>(cp);
            if (std::isspace(c) || std::ispunct(c)) continue;
            out.push_back(static_cast<char>(std::tolower(c)));
            continue;
        }
        if (cp == kReplacement || is_cjk_punct(cp)) continue;
        out += encode_utf8(cp);
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view line, const TokenizerConfig& cfg) {
    const std::vector<char32_t> cps = decode_utf8(line);

    // Pre-decode the merge list once per call; corpora are tokenized line by
    // line so this is cheap relative to the embedding build itself.
    std::vector<std::vector<char32_t>> merges;
    merges.reserve(cfg.merges.size());
    for (const auto& m : cfg.merges) merges.push_back(decode_utf8(m));
    std::sort(merges.begin(), merges.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });

    std::vector<std::string> tokens;
    std::string latin;
    auto flush_latin = [&] {
        if (!latin.empty()) {
            tokens.push_back(latin);
            latin.clear();
        }
    };

    std::size_t i = 0;
    while (i < cps.size()) {
        char32_t cp = fold_width(cps[i]);
        if (is_cjk(cp)) {
            flush_latin();
            bool merged = false;
            for (const auto& m : merges) {
                if (m.empty() || i + m.size() > cps.size()) continue;
                if (std::equal(m.begin(), m.end(), cps.begin() + static_cast<std::ptrdiff_t>(i))) {
                    tokens.push_back(encode_utf8(m));
                    i += m.size();
                    merged = true;
                    break;
                }
            }
            if (!merged) {
                tokens.push_back(encode_utf8(cp));
                ++i;
            }
            continue;
        }
        if (cp <= 0x7F) {
            const auto c = static_cast<unsigned char>(cp);
            if (std::isalnum(c) || c == '_') {
                latin.push_back(cfg.lowercase_latin ? static_cast<char>(std::tolower(c))
                                                    : static_cast<char>(c));
            } else {
                flush_latin();
            }
            ++i;
            continue;
        }
        // Non-CJK, non-ASCII (e.g. CJK punctuation): token boundary.
        flush_latin();
        ++i;
    }
    flush_latin();
    return tokens;
}

}  // namespace medbridge::text
