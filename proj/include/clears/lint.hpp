#pragma once

// Detectors for the observed failure modes of prompted simplification:
// echoed input or exemplar, wrong output language, dropped numbers/dates, and
// first-person narration. All detectors are lexical and pure.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clears/corpus.hpp"
#include "clears/text.hpp"

namespace clears {

struct LintLexicon {
    std::unordered_set<std::string> es_stopwords;
    std::unordered_set<std::string> en_stopwords;
    std::unordered_set<std::string> first_person;
    std::unordered_set<std::string> months;

    /// Reads stopwords_{es,en}.txt, first_person_es.txt and months_es.txt.
    static LintLexicon load(const std::filesystem::path& dir) {
        auto set_of = [&](const char* name) {
            std::unordered_set<std::string> s;
            for (auto& w : text::read_list_file(dir / name)) s.insert(text::to_lower(text::nfc(w)));
            return s;
        };
        return {set_of("stopwords_es.txt"), set_of("stopwords_en.txt"), set_of("first_person_es.txt"),
                set_of("months_es.txt")};
    }
};

struct LintThresholds {
    double echo = 0.9;
    double language_margin = 0.05;
    std::size_t min_language_tokens = 5;
};

struct EchoResult {
    bool flag = false;
    double similarity = 0.0;
};

enum class LanguageGuess { es, en, other };

inline std::string to_string(LanguageGuess g) {
    switch (g) {
        case LanguageGuess::es: return "es";
        case LanguageGuess::en: return "en";
        case LanguageGuess::other: return "other";
    }
    return "other";
}

struct LanguageResult {
    LanguageGuess guess = LanguageGuess::other;
    double es_ratio = 0.0;
    double en_ratio = 0.0;
};

struct RetentionResult {
    std::vector<std::string> missing_numbers;
    std::vector<std::string> missing_dates;
};

struct EchoedExample {
    std::size_t index = 0;
    double similarity = 0.0;
};

namespace detail {

using Gram = std::string;

/// Word trigrams; texts shorter than three tokens yield one gram of all tokens.
inline std::set<Gram> trigram_set(std::string_view s) {
    const auto toks = text::normalized_tokens(s);
    std::set<Gram> grams;
    if (toks.empty()) return grams;
    if (toks.size() < 3) {
        grams.insert(text::join(toks, "\x1f"));
        return grams;
    }
    for (std::size_t i = 0; i + 2 < toks.size(); ++i) grams.insert(toks[i] + '\x1f' + toks[i + 1] + '\x1f' + toks[i + 2]);
    return grams;
}

inline double jaccard(const std::set<Gram>& a, const std::set<Gram>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& g : a) inter += b.count(g);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Lowercased runs of digits or of letters, split where the class changes.
inline std::vector<std::string> retention_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    int cur_kind = 0;  // 0 none, 1 digit, 2 letter
    text::for_each_codepoint(s, [&](UChar32 c, std::size_t, std::size_t) {
        const int kind = u_isdigit(c) ? 1 : (text::is_word_char(c) ? 2 : 0);
        if (kind != cur_kind && !cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
        cur_kind = kind;
        if (kind) text::append_utf8(cur, u_tolower(c));
    });
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline std::vector<std::string> extract_numbers(std::string_view s) {
    std::vector<std::string> out;
    auto digit = [&](std::size_t i) { return i < s.size() && s[i] >= '0' && s[i] <= '9'; };
    std::size_t i = 0;
    while (i < s.size()) {
        if (!digit(i)) {
            ++i;
            continue;
        }
        std::string num;
        while (digit(i)) num += s[i++];
        // Thousands groups: "2.000" / "2,000" -> "2000".
        if (num.size() <= 3) {
            while (i < s.size() && (s[i] == '.' || s[i] == ',') && digit(i + 1) && digit(i + 2) && digit(i + 3) &&
                   !digit(i + 4)) {
                num.append(s.substr(i + 1, 3));
                i += 4;
            }
        }
        out.push_back(std::move(num));
    }
    return out;
}

inline std::vector<std::string> extract_dates(const std::vector<std::string>& toks, const LintLexicon& lex) {
    std::vector<std::string> out;
    auto is_year = [](const std::string& t) {
        if (t.size() != 4 || !all_digits(t)) return false;
        const int y = std::stoi(t);
        return y >= 1900 && y <= 2099;
    };
    auto is_connector = [](const std::string& t) { return t == "de" || t == "del"; };
    std::size_t k = 0;
    while (k < toks.size()) {
        const auto& t = toks[k];
        if (all_digits(t) && t.size() <= 2 && std::stoi(t) >= 1 && std::stoi(t) <= 31 && k + 2 < toks.size() &&
            toks[k + 1] == "de" && lex.months.contains(toks[k + 2])) {
            std::string date = t + " de " + toks[k + 2];
            k += 3;
            if (k + 1 < toks.size() && is_connector(toks[k]) && is_year(toks[k + 1])) {
                date += " " + toks[k] + " " + toks[k + 1];
                k += 2;
            }
            out.push_back(std::move(date));
        } else if (lex.months.contains(t) && k + 2 < toks.size() && is_connector(toks[k + 1]) && is_year(toks[k + 2])) {
            out.push_back(t + " " + toks[k + 1] + " " + toks[k + 2]);
            k += 3;
        } else if (is_year(t)) {
            out.push_back(t);
            ++k;
        } else {
            ++k;
        }
    }
    return out;
}

template <typename Pred>
std::vector<std::string> unique_filtered(const std::vector<std::string>& items, Pred&& keep) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& it : items)
        if (keep(it) && seen.insert(it).second) out.push_back(it);
    return out;
}

}  // namespace detail

/// Token-trigram Jaccard after lowercasing and punctuation stripping. Symmetric.
inline double echo_similarity(std::string_view a, std::string_view b) {
    return detail::jaccard(detail::trigram_set(a), detail::trigram_set(b));
}

inline EchoResult detect_echo(std::string_view output, std::string_view candidate, double threshold = 0.9) {
    const double sim = echo_similarity(output, candidate);
    return {sim >= threshold, sim};
}

inline LanguageResult detect_language(std::string_view output, const LintLexicon& lex, const LintThresholds& th = {}) {
    const auto toks = text::normalized_tokens(output);
    LanguageResult r;
    if (toks.empty()) return r;
    std::size_t es = 0, en = 0;
    for (const auto& t : toks) {
        es += lex.es_stopwords.count(t);
        en += lex.en_stopwords.count(t);
    }
    r.es_ratio = static_cast<double>(es) / static_cast<double>(toks.size());
    r.en_ratio = static_cast<double>(en) / static_cast<double>(toks.size());
    if (toks.size() < th.min_language_tokens) return r;
    if (r.es_ratio - r.en_ratio >= th.language_margin) r.guess = LanguageGuess::es;
    else if (r.en_ratio - r.es_ratio >= th.language_margin) r.guess = LanguageGuess::en;
    return r;
}

/// Numbers and Spanish dates present in source but absent from output.
inline RetentionResult check_retention(std::string_view source, std::string_view output, const LintLexicon& lex) {
    RetentionResult r;
    const auto out_numbers = detail::extract_numbers(output);
    const std::set<std::string> out_set(out_numbers.begin(), out_numbers.end());
    r.missing_numbers = detail::unique_filtered(detail::extract_numbers(source),
                                                [&](const std::string& n) { return !out_set.contains(n); });

    const auto out_toks = detail::retention_tokens(output);
    const std::string haystack = " " + text::join(out_toks, " ") + " ";
    r.missing_dates = detail::unique_filtered(detail::extract_dates(detail::retention_tokens(source), lex),
                                              [&](const std::string& d) {
                                                  return haystack.find(" " + d + " ") == std::string::npos;
                                              });
    return r;
}

/// First-person tokens in output that the source does not contain.
inline std::vector<std::string> check_first_person(std::string_view output, std::string_view source, const LintLexicon& lex) {
    const auto src = text::normalized_tokens(source);
    const std::set<std::string> src_set(src.begin(), src.end());
    return detail::unique_filtered(text::normalized_tokens(output), [&](const std::string& t) {
        return lex.first_person.contains(t) && !src_set.contains(t);
    });
}

inline std::optional<EchoedExample> detect_echoed_example(std::string_view output, const std::vector<FewShotExample>& examples,
                                                          double threshold) {
    std::optional<EchoedExample> best;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const double sim = std::max(echo_similarity(output, examples[i].simple_text),
                                    echo_similarity(output, examples[i].complex_text));
        if (!best || sim > best->similarity) best = EchoedExample{i, sim};
    }
    if (best && best->similarity >= threshold) return best;
    return std::nullopt;
}

struct LintReport {
    EchoResult echoed_input;
    LanguageResult language;
    std::optional<EchoedExample> echoed_example;
    std::vector<std::string> missing_numbers;
    std::vector<std::string> missing_dates;
    std::vector<std::string> first_person_hits;

    std::vector<std::string> flags() const {
        std::vector<std::string> f;
        if (echoed_input.flag) f.emplace_back("echoed_input");
        if (echoed_example) f.emplace_back("echoed_example");
        if (language.guess != LanguageGuess::es) f.emplace_back("language_" + to_string(language.guess));
        if (!missing_numbers.empty()) f.emplace_back("missing_numbers");
        if (!missing_dates.empty()) f.emplace_back("missing_dates");
        if (!first_person_hits.empty()) f.emplace_back("first_person");
        return f;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{
            {"echoed_input", {{"flag", echoed_input.flag}, {"similarity", echoed_input.similarity}}},
            {"language",
             {{"guess", to_string(language.guess)}, {"es_ratio", language.es_ratio}, {"en_ratio", language.en_ratio}}},
            {"echoed_example", nullptr},
            {"missing_numbers", missing_numbers},
            {"missing_dates", missing_dates},
            {"first_person_hits", first_person_hits},
            {"flags", flags()},
        };
        if (echoed_example)
            j["echoed_example"] = {{"index", echoed_example->index}, {"similarity", echoed_example->similarity}};
        return j;
    }
};

inline LintReport lint_output(std::string_view output, std::string_view source, const std::vector<FewShotExample>& examples,
                              const LintLexicon& lex, const LintThresholds& th = {}) {
    LintReport r;
    r.echoed_input = detect_echo(output, source, th.echo);
    r.language = detect_language(output, lex, th);
    r.echoed_example = detect_echoed_example(output, examples, th.echo);
    auto ret = check_retention(source, output, lex);
    r.missing_numbers = std::move(ret.missing_numbers);
    r.missing_dates = std::move(ret.missing_dates);
    r.first_person_hits = check_first_person(output, source, lex);
    return r;
}

}  // namespace clears
