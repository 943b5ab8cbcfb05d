#pragma once

// Extraction of the simplification from raw completions.
//
// Dict-literal grammar accepted by parse_dict_output:
//   output := junk? '{' ws key ws sep ws string ws '}' junk?
//   key    := quoted("simple" | alias) | bare alias
//   sep    := ':' | '='
//   string := '"' chars '"' | '\'' chars '\''    (backslash escapes)
// Every deviation from the canonical `{"simple": "..."}` shape is recorded as a
// Repair; anything outside the grammar fails with a note.

#include <algorithm>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "clears/prompts.hpp"
#include "clears/text.hpp"

namespace clears {

enum class ExtractStatus { clean, repaired, fallback_raw, failed };

// Declaration order is the order repairs are reported in.
enum class Repair {
    stripped_preamble,
    colon_equals_swap,
    quote_normalized,
    whitespace_normalized,
    key_alias_accepted,
    trailing_text_dropped,
};

inline std::string to_string(ExtractStatus s) {
    switch (s) {
        case ExtractStatus::clean: return "clean";
        case ExtractStatus::repaired: return "repaired";
        case ExtractStatus::fallback_raw: return "fallback_raw";
        case ExtractStatus::failed: return "failed";
    }
    return "failed";
}

inline ExtractStatus parse_extract_status(std::string_view s) {
    for (auto st : {ExtractStatus::clean, ExtractStatus::repaired, ExtractStatus::fallback_raw, ExtractStatus::failed})
        if (to_string(st) == s) return st;
    throw DataError("unknown extraction status '" + std::string(s) + "'");
}

inline std::string to_string(Repair r) {
    switch (r) {
        case Repair::stripped_preamble: return "stripped_preamble";
        case Repair::colon_equals_swap: return "colon_equals_swap";
        case Repair::quote_normalized: return "quote_normalized";
        case Repair::whitespace_normalized: return "whitespace_normalized";
        case Repair::key_alias_accepted: return "key_alias_accepted";
        case Repair::trailing_text_dropped: return "trailing_text_dropped";
    }
    return {};
}

inline Repair parse_repair(std::string_view s) {
    for (auto r : {Repair::stripped_preamble, Repair::colon_equals_swap, Repair::quote_normalized,
                   Repair::whitespace_normalized, Repair::key_alias_accepted, Repair::trailing_text_dropped})
        if (to_string(r) == s) return r;
    throw DataError("unknown repair '" + std::string(s) + "'");
}

struct ExtractionResult {
    std::optional<std::string> simple_text;
    ExtractStatus status = ExtractStatus::failed;
    std::vector<Repair> repairs;
    std::string notes;

    bool ok() const { return status != ExtractStatus::failed; }

    friend bool operator==(const ExtractionResult&, const ExtractionResult&) = default;
};

inline std::vector<std::string> default_preamble_patterns() {
    return {
        R"(^(here is|here's|here are)\b[^{]*$)",
        R"(^(sure|certainly|of course|okay|ok)\b[^{]*$)",
        R"(^(aquí (está|tienes|va|te dejo)|a continuación|claro|por supuesto|desde luego)[^{]*$)",
        R"(^```[A-Za-z]*$)",
    };
}

struct ExtractOptions {
    /// Accepted besides "simple"; compared case-insensitively.
    std::vector<std::string> key_aliases{"simplificación", "simplification"};
    /// When false, only canonical input is accepted; anything needing a repair fails.
    bool allow_repairs = true;
    /// In dict_literal mode, return the de-preambled raw text as fallback_raw when parsing fails.
    bool fallback_raw_on_dict_failure = false;
    std::vector<std::string> preamble_patterns = default_preamble_patterns();
};

/// True when s, trimmed and lowercased, is "simple" or one of the accepted aliases.
inline bool is_key_name(std::string_view s, const ExtractOptions& opts = {}) {
    const auto l = text::to_lower(text::trim(s));
    if (l == "simple") return true;
    return std::any_of(opts.key_aliases.begin(), opts.key_aliases.end(),
                       [&](const std::string& a) { return text::to_lower(text::nfc(a)) == l; });
}

/// Escapes v for embedding in a quoted literal using the given quote character.
inline std::string escape_string_literal(std::string_view v, char quote = '"') {
    std::string out;
    out.reserve(v.size() + 8);
    for (unsigned char c : v) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c == static_cast<unsigned char>(quote)) {
                    out += '\\';
                    out += static_cast<char>(c);
                } else if (c < 0x20) {
                    static constexpr char hex[] = "0123456789abcdef";
                    out += "\\u00";
                    out += hex[c >> 4];
                    out += hex[c & 0xF];
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

/// Canonical dict-literal payload for v.
inline std::string wrap_dict_literal(std::string_view v) {
    return "{\"simple\": \"" + escape_string_literal(v, '"') + "\"}";
}

namespace detail {

inline bool has_brace_after(const std::vector<std::string_view>& lines, std::size_t idx) {
    for (std::size_t j = idx + 1; j < lines.size(); ++j)
        if (lines[j].find('{') != std::string_view::npos) return true;
    return false;
}

inline bool is_preamble_line(std::string_view line, bool brace_follows, const std::vector<std::regex>& patterns) {
    if (brace_follows && line.back() == ':' && line.find('{') == std::string_view::npos) return true;
    const std::string s(line);
    return std::any_of(patterns.begin(), patterns.end(), [&](const std::regex& re) { return std::regex_search(s, re); });
}

inline std::vector<std::regex> compile_patterns(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    for (const auto& p : patterns) out.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    return out;
}

struct BlockOutcome {
    std::optional<std::string> value;
    std::size_t end = 0;
    std::set<Repair> repairs;
    std::string failure;
};

class DictBlockParser {
public:
    DictBlockParser(std::string_view raw, const ExtractOptions& opts) : raw_(raw), opts_(opts) {}

    BlockOutcome parse_at(std::size_t open) {
        BlockOutcome out;
        i_ = open + 1;
        repairs_.clear();
        try {
            skip_ws();
            parse_key();
            skip_ws();
            parse_sep();
            skip_ws();
            std::string value = parse_string();
            skip_ws();
            if (i_ >= raw_.size() || raw_[i_] != '}') fail("expected '}' after value");
            out.end = i_ + 1;
            value = text::nfc(value);
            if (text::trim(value).empty()) fail("empty value");
            if (is_key_name(value)) fail("value is the key name");
            out.value = std::move(value);
            out.repairs = repairs_;
        } catch (const BlockFailure& f) {
            out.failure = f.what;
        }
        return out;
    }

private:
    struct BlockFailure {
        std::string what;
    };

    [[noreturn]] void fail(const std::string& why) const {
        throw BlockFailure{why + " at offset " + std::to_string(i_)};
    }

    void skip_ws() {
        const std::size_t start = i_;
        while (i_ < raw_.size() && text::is_space(raw_[i_])) ++i_;
        const auto run = raw_.substr(start, i_ - start);
        if (!run.empty() && run != " ") repairs_.insert(Repair::whitespace_normalized);
    }

    bool is_key_name(std::string_view s) const { return clears::is_key_name(s, opts_); }

    void parse_key() {
        if (i_ >= raw_.size()) fail("truncated before key");
        std::string key;
        const char c = raw_[i_];
        if (c == '"' || c == '\'') {
            if (c == '\'') repairs_.insert(Repair::quote_normalized);
            key = read_quoted(c);
        } else {
            const std::size_t start = i_;
            text::for_each_codepoint(raw_.substr(i_), [&, done = false](UChar32 cp, std::size_t off, std::size_t len) mutable {
                if (done) return;
                if (text::is_word_char(cp) || cp == '_') {
                    i_ = start + off + len;
                } else {
                    done = true;
                }
            });
            key = std::string(raw_.substr(start, i_ - start));
            if (key.empty()) fail("expected key");
            repairs_.insert(Repair::quote_normalized);
        }
        key = text::nfc(key);
        if (key == "simple") return;
        if (!is_key_name(key)) fail("unexpected key '" + key + "'");
        repairs_.insert(Repair::key_alias_accepted);
    }

    void parse_sep() {
        if (i_ >= raw_.size()) fail("truncated before separator");
        if (raw_[i_] == ':') {
            ++i_;
        } else if (raw_[i_] == '=') {
            repairs_.insert(Repair::colon_equals_swap);
            ++i_;
        } else {
            fail("expected ':' or '='");
        }
    }

    std::string parse_string() {
        if (i_ >= raw_.size()) fail("truncated before value");
        const char q = raw_[i_];
        if (q != '"' && q != '\'') fail("value is not a quoted string");
        if (q == '\'') repairs_.insert(Repair::quote_normalized);
        return read_quoted(q);
    }

    static int hex_value(char c) {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    }

    std::optional<uint32_t> read_hex(std::size_t at, std::size_t digits) const {
        if (at + digits > raw_.size()) return std::nullopt;
        uint32_t v = 0;
        for (std::size_t k = 0; k < digits; ++k) {
            const int h = hex_value(raw_[at + k]);
            if (h < 0) return std::nullopt;
            v = v * 16 + static_cast<uint32_t>(h);
        }
        return v;
    }

    // Positioned on the opening quote; leaves i_ after the closing quote.
    std::string read_quoted(char q) {
        std::string out;
        ++i_;
        while (i_ < raw_.size()) {
            const char c = raw_[i_];
            if (c == q) {
                ++i_;
                return out;
            }
            if (c != '\\') {
                out += c;
                ++i_;
                continue;
            }
            if (i_ + 1 >= raw_.size()) break;
            const char e = raw_[i_ + 1];
            i_ += 2;
            switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case '\\': out += '\\'; break;
                case '"': out += '"'; break;
                case '\'': out += '\''; break;
                case '/': out += '/'; break;
                case 'x': {
                    if (auto v = read_hex(i_, 2)) {
                        text::append_utf8(out, static_cast<UChar32>(*v));
                        i_ += 2;
                    } else {
                        out += "\\x";
                    }
                    break;
                }
                case 'u': {
                    auto v = read_hex(i_, 4);
                    if (!v) {
                        out += "\\u";
                        break;
                    }
                    i_ += 4;
                    uint32_t cp = *v;
                    if (cp >= 0xD800 && cp <= 0xDBFF && i_ + 1 < raw_.size() && raw_[i_] == '\\' && raw_[i_ + 1] == 'u') {
                        if (auto lo = read_hex(i_ + 2, 4); lo && *lo >= 0xDC00 && *lo <= 0xDFFF) {
                            cp = 0x10000 + ((cp - 0xD800) << 10) + (*lo - 0xDC00);
                            i_ += 6;
                        }
                    }
                    text::append_utf8(out, static_cast<UChar32>(cp));
                    break;
                }
                default:
                    out += '\\';
                    out += e;
            }
        }
        fail("unterminated string");
    }

    std::string_view raw_;
    const ExtractOptions& opts_;
    std::size_t i_ = 0;
    std::set<Repair> repairs_;
};

inline std::vector<Repair> ordered(const std::set<Repair>& s) { return {s.begin(), s.end()}; }

}  // namespace detail

/// Removes leading preamble lines; returns the input unchanged when none match. Idempotent.
inline std::string strip_preamble(std::string_view raw, const std::vector<std::string>& patterns = default_preamble_patterns()) {
    const auto regexes = detail::compile_patterns(patterns);
    const auto lines = text::split_lines(raw);
    std::size_t idx = 0;
    bool removed = false;
    while (idx < lines.size()) {
        const auto t = text::trim(lines[idx]);
        if (t.empty()) {
            ++idx;
            continue;
        }
        if (!detail::is_preamble_line(t, detail::has_brace_after(lines, idx), regexes)) break;
        removed = true;
        ++idx;
    }
    if (!removed) return std::string(raw);
    if (idx >= lines.size()) return {};
    const auto offset = static_cast<std::size_t>(lines[idx].data() - raw.data());
    return std::string(raw.substr(offset));
}

/// Total over text: failures are reported through status=failed.
inline ExtractionResult parse_dict_output(std::string_view raw, const ExtractOptions& opts = {}) {
    ExtractionResult res;
    detail::DictBlockParser parser(raw, opts);
    std::string first_failure;
    for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
        auto block = parser.parse_at(open);
        if (!block.value) {
            if (first_failure.empty()) first_failure = block.failure;
            continue;
        }
        auto repairs = block.repairs;
        if (!text::trim(raw.substr(0, open)).empty()) repairs.insert(Repair::stripped_preamble);
        if (!text::trim(raw.substr(block.end)).empty()) repairs.insert(Repair::trailing_text_dropped);
        if (!opts.allow_repairs && !repairs.empty()) {
            res.notes = "input needs repairs (" + to_string(*repairs.begin()) + ") but repairs are disabled";
            return res;
        }
        res.simple_text = std::move(block.value);
        res.repairs = detail::ordered(repairs);
        res.status = res.repairs.empty() ? ExtractStatus::clean : ExtractStatus::repaired;
        return res;
    }
    res.notes = first_failure.empty() ? "no '{' found" : first_failure;
    return res;
}

/// Applies the extraction policy for the prompt's output mode.
inline ExtractionResult extract(std::string_view raw, OutputMode mode, const ExtractOptions& opts = {}) {
    if (text::trim(raw).empty()) return {std::nullopt, ExtractStatus::failed, {}, "empty completion"};
    auto parsed = parse_dict_output(raw, opts);
    if (parsed.ok()) return parsed;
    if (mode == OutputMode::dict_literal && !opts.fallback_raw_on_dict_failure) return parsed;

    const std::string stripped = strip_preamble(raw, opts.preamble_patterns);
    const auto body = text::trim(stripped);
    if (body.empty()) return {std::nullopt, ExtractStatus::failed, {}, "completion holds only preamble"};
    ExtractionResult res;
    res.simple_text = text::nfc(body);
    res.status = ExtractStatus::fallback_raw;
    if (stripped.size() != raw.size()) res.repairs.push_back(Repair::stripped_preamble);
    res.notes = mode == OutputMode::free_text ? "free-text output" : "dict parse failed: " + parsed.notes;
    return res;
}

}  // namespace clears
