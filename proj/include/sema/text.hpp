#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sema {

using TokenSequence = std::vector<std::string>;

namespace detail {

struct Utf8Char {
    char32_t code = 0;
    std::size_t length = 1;
};

// Malformed bytes map to U+DC80..U+DCFF (one per byte) so they survive a
// decode/encode round trip unchanged.
inline constexpr char32_t kRawByteBase = 0xDC00;

inline Utf8Char decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    const Utf8Char raw{kRawByteBase + b0, 1};
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    auto bits = [&](std::size_t k) { return static_cast<char32_t>(s[i + k] & 0x3F); };
    if (b0 < 0x80) return {b0, 1};
    if ((b0 & 0xE0) == 0xC0 && cont(1) && b0 >= 0xC2) {
        return {(char32_t(b0 & 0x1F) << 6) | bits(1), 2};
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        const char32_t c = (char32_t(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2);
        if (c < 0x800 || (c >= 0xD800 && c <= 0xDFFF)) return raw;
        return {c, 3};
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        const char32_t c = (char32_t(b0 & 0x07) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3);
        if (c < 0x10000 || c > 0x10FFFF) return raw;
        return {c, 4};
    }
    return raw;
}

inline void append_utf8(std::string& out, char32_t c) {
    if (c >= kRawByteBase + 0x80 && c <= kRawByteBase + 0xFF) {
        out.push_back(static_cast<char>(c - kRawByteBase));
    } else if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

inline bool is_space(char32_t c) {
    return c == U' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
           c == 0x205F || c == 0x3000;
}

inline bool is_punct(char32_t c) {
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    }
    return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB ||
           c == 0xBF || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
           (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011);
}

// ASCII and Latin-1 letters only; other scripts pass through unchanged.
inline char32_t to_lower(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    return c;
}

}  // namespace detail

/// Lowercase, split on whitespace, strip punctuation from both ends of each
/// token, drop empties. Every text metric uses this tokenizer.
inline TokenSequence tokenize(std::string_view text) {
    TokenSequence tokens;
    std::vector<char32_t> word;
    auto flush = [&] {
        std::size_t begin = 0;
        std::size_t end = word.size();
        while (begin < end && detail::is_punct(word[begin])) ++begin;
        while (end > begin && detail::is_punct(word[end - 1])) --end;
        if (begin < end) {
            std::string token;
            for (std::size_t k = begin; k < end; ++k) detail::append_utf8(token, word[k]);
            tokens.push_back(std::move(token));
        }
        word.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        const auto ch = detail::decode_utf8(text, i);
        i += ch.length;
        if (detail::is_space(ch.code)) {
            flush();
        } else {
            word.push_back(detail::to_lower(ch.code));
        }
    }
    flush();
    return tokens;
}

inline std::string join(const TokenSequence& tokens, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

}  // namespace sema
