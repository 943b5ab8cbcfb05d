#pragma once

// UTF-8 text helpers shared by every module: normalization, case folding,
// word tokenization and small file/string utilities.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <openssl/evp.h>

#include "clears/error.hpp"

namespace clears::text {

/// Calls fn(code_point, byte_offset, byte_length) for each code point.
/// Ill-formed sequences are reported as U+FFFD covering one byte.
template <typename Fn>
void for_each_codepoint(std::string_view s, Fn&& fn) {
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    const auto len = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < len) {
        const int32_t start = i;
        UChar32 c = 0;
        U8_NEXT(p, i, len, c);
        if (c < 0) c = 0xFFFD;
        fn(c, static_cast<std::size_t>(start), static_cast<std::size_t>(i - start));
    }
}

inline void append_utf8(std::string& out, UChar32 c) {
    char buf[4];
    int32_t n = 0;
    UBool err = false;
    U8_APPEND(reinterpret_cast<uint8_t*>(buf), n, 4, c, err);
    if (!err) out.append(buf, static_cast<std::size_t>(n));
}

inline std::vector<UChar32> codepoints(std::string_view s) {
    std::vector<UChar32> out;
    out.reserve(s.size());
    for_each_codepoint(s, [&](UChar32 c, std::size_t, std::size_t) { out.push_back(c); });
    return out;
}

inline std::string nfc(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    if (norm->isNormalized(src, status) && U_SUCCESS(status)) return std::string(s);
    status = U_ZERO_ERROR;
    icu::UnicodeString dst = norm->normalize(src, status);
    if (U_FAILURE(status)) throw Error("NFC normalization failed");
    std::string out;
    dst.toUTF8String(out);
    return out;
}

/// Simple per-code-point lowercase mapping.
inline std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for_each_codepoint(s, [&](UChar32 c, std::size_t, std::size_t) { append_utf8(out, u_tolower(c)); });
    return out;
}

inline bool is_word_char(UChar32 c) {
    return u_isalnum(c) || u_charType(c) == U_NON_SPACING_MARK;
}

inline bool is_letter(UChar32 c) { return u_isalpha(c); }

/// Maximal runs of letters/digits, original casing.
inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    bool in_word = false;
    for_each_codepoint(s, [&](UChar32 c, std::size_t off, std::size_t) {
        const bool w = is_word_char(c);
        if (w && !in_word) start = off;
        if (!w && in_word) out.emplace_back(s.substr(start, off - start));
        in_word = w;
    });
    if (in_word) out.emplace_back(s.substr(start));
    return out;
}

/// Lowercased, punctuation-free word tokens.
inline std::vector<std::string> normalized_tokens(std::string_view s) {
    auto toks = word_tokens(s);
    for (auto& t : toks) t = to_lower(t);
    return toks;
}

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

inline std::string trim_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    return to_lower(s).starts_with(to_lower(prefix));
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Reads a one-item-per-line data file; blank lines and '#' comments are skipped.
inline std::vector<std::string> read_list_file(const std::filesystem::path& path) {
    std::vector<std::string> out;
    const std::string body = read_file(path);
    for (auto line : split_lines(body)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        out.emplace_back(line);
    }
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL) {
    uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace clears::text
