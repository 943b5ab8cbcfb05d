#pragma once

// Scoring: Spanish syllabification, Fernández-Huerta readability and its band
// labels, TF-IDF cosine, embedding cosine, plain BERTScore F1 and the averaged
// TF-IDF/embedding similarity.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "clears/error.hpp"
#include "clears/text.hpp"

namespace clears {

// ---------------------------------------------------------------- syllables

namespace detail {

enum class VowelKind { none, weak, strong };

// Accented i/u behave as strong vowels: they break diphthongs (hiatus).
inline VowelKind vowel_kind(UChar32 c) {
    switch (c) {
        case U'a': case U'e': case U'o':
        case U'á': case U'é': case U'ó':
        case U'à': case U'è': case U'ò':
        case U'í': case U'ú': case U'ì': case U'ù':
            return VowelKind::strong;
        case U'i': case U'u': case U'ü': case U'ï':
            return VowelKind::weak;
        default:
            return VowelKind::none;
    }
}

inline bool front_vowel(UChar32 c) { return c == U'e' || c == U'i' || c == U'é' || c == U'í'; }

}  // namespace detail

/// Number of vowel nuclei in a Spanish word. Words without any vowel count as 1.
inline std::size_t count_syllables(std::string_view word) {
    auto cps = text::codepoints(text::to_lower(text::nfc(word)));
    std::vector<detail::VowelKind> kind(cps.size());
    for (std::size_t k = 0; k < cps.size(); ++k) kind[k] = detail::vowel_kind(cps[k]);

    // Silent u in que/qui/gue/gui.
    for (std::size_t k = 1; k + 1 < cps.size(); ++k)
        if (cps[k] == U'u' && (cps[k - 1] == U'q' || cps[k - 1] == U'g') && detail::front_vowel(cps[k + 1]))
            kind[k] = detail::VowelKind::none;
    // Word-final y is vocalic (hoy, muy, Uruguay, y).
    if (!cps.empty() && cps.back() == U'y') kind.back() = detail::VowelKind::weak;

    std::size_t nuclei = 0;
    std::size_t k = 0;
    while (k < cps.size()) {
        if (kind[k] == detail::VowelKind::none) {
            ++k;
            continue;
        }
        std::size_t strong = 0, repeats = 0;
        const std::size_t start = k;
        for (; k < cps.size() && kind[k] != detail::VowelKind::none; ++k) {
            if (kind[k] == detail::VowelKind::strong) ++strong;
            if (k > start && cps[k] == cps[k - 1] && kind[k] == detail::VowelKind::weak) ++repeats;
        }
        // Unaccented weak vowels attach to a neighbouring strong vowel; a run of
        // distinct weak vowels forms a single nucleus (ciu-dad), a doubled one does not (chi-i-ta).
        nuclei += strong > 0 ? strong : 1 + repeats;
    }
    return nuclei == 0 ? 1 : nuclei;
}

// ---------------------------------------------------------------- text stats

struct TextStats {
    std::size_t sentence_count = 0;
    std::size_t word_count = 0;
    std::size_t syllable_count = 0;
    double syllables_per_100_words = 0.0;  // P
    double words_per_sentence = 0.0;       // F
};

namespace detail {

inline bool is_terminator(UChar32 c) { return c == U'.' || c == U'!' || c == U'?' || c == U'…'; }
inline bool is_closer(UChar32 c) {
    return c == U'"' || c == U'\'' || c == U'”' || c == U'’' || c == U'»' || c == U')' || c == U']';
}

}  // namespace detail

/// Sentences end at . ! ? … followed (after optional closing quotes/brackets) by
/// whitespace or end of text, and at every newline. Only segments holding a word count.
inline std::size_t count_sentences(std::string_view s) {
    const auto cps = text::codepoints(s);
    std::size_t sentences = 0;
    bool has_word = false;
    auto close = [&] {
        if (has_word) ++sentences;
        has_word = false;
    };
    std::size_t k = 0;
    while (k < cps.size()) {
        const UChar32 c = cps[k];
        if (c == U'\n') {
            close();
            ++k;
            continue;
        }
        if (detail::is_terminator(c)) {
            std::size_t j = k;
            while (j < cps.size() && detail::is_terminator(cps[j])) ++j;
            while (j < cps.size() && detail::is_closer(cps[j])) ++j;
            if (j == cps.size() || u_isspace(cps[j])) close();
            k = j;
            continue;
        }
        if (text::is_word_char(c)) has_word = true;
        ++k;
    }
    close();
    return sentences;
}

inline TextStats text_stats(std::string_view s) {
    TextStats st;
    const auto words = text::word_tokens(s);
    if (words.empty()) return st;
    st.word_count = words.size();
    for (const auto& w : words) st.syllable_count += count_syllables(w);
    st.sentence_count = count_sentences(s);
    st.syllables_per_100_words = 100.0 * static_cast<double>(st.syllable_count) / static_cast<double>(st.word_count);
    st.words_per_sentence = static_cast<double>(st.word_count) / static_cast<double>(st.sentence_count);
    return st;
}

// ---------------------------------------------------------------- readability

inline constexpr double kFhIntercept = 206.84;
inline constexpr double kFhSyllableWeight = 0.60;
inline constexpr double kFhSentenceWeight = 1.02;

/// L = 206.84 - 0.60 P - 1.02 F, unclamped.
inline double fernandez_huerta(double syllables_per_100_words, double words_per_sentence) {
    return kFhIntercept - kFhSyllableWeight * syllables_per_100_words - kFhSentenceWeight * words_per_sentence;
}

inline double fernandez_huerta(const TextStats& st) {
    if (st.word_count == 0 || st.sentence_count == 0) throw Error("Fernández-Huerta score undefined for text without words");
    return fernandez_huerta(st.syllables_per_100_words, st.words_per_sentence);
}

inline double fernandez_huerta(std::string_view s) { return fernandez_huerta(text_stats(s)); }

struct Band {
    double lo;
    double hi;
    std::string label;
};

class BandTable {
public:
    explicit BandTable(std::vector<Band> bands) : bands_(std::move(bands)) {
        if (bands_.empty()) throw DataError("empty readability band table");
        std::sort(bands_.begin(), bands_.end(), [](const Band& a, const Band& b) { return a.lo < b.lo; });
    }

    /// Tab-separated "lo hi label" lines; '#' comments allowed.
    static BandTable load(const std::filesystem::path& path) {
        std::vector<Band> bands;
        for (const auto& line : text::read_list_file(path)) {
            const auto t1 = line.find('\t');
            const auto t2 = line.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos) throw DataError(path.string() + ": bad band line: " + line);
            bands.push_back({std::stod(line.substr(0, t1)), std::stod(line.substr(t1 + 1, t2 - t1 - 1)),
                             std::string(text::trim(line.substr(t2 + 1)))});
        }
        return BandTable(std::move(bands));
    }

    /// Half-open [lo, hi) lookup; scores beyond either end take the end band.
    const std::string& label(double score) const {
        if (score < bands_.front().lo) return bands_.front().label;
        if (score >= bands_.back().hi) return bands_.back().label;
        for (const auto& b : bands_)
            if (score >= b.lo && score < b.hi) return b.label;
        throw Error("score " + std::to_string(score) + " falls in a gap of the band table");
    }

    const std::vector<Band>& bands() const { return bands_; }

private:
    std::vector<Band> bands_;
};

inline const std::string& readability_band(double score, const BandTable& table) { return table.label(score); }

// ---------------------------------------------------------------- TF-IDF

using SparseVector = std::map<std::string, double>;

/// Smoothed TF-IDF: tf = raw count, idf = ln((1 + N) / (1 + df)) + 1, L2-normalized.
class TfidfModel {
public:
    TfidfModel() = default;

    explicit TfidfModel(const std::vector<std::string>& collection) { fit(collection); }

    void fit(const std::vector<std::string>& collection) {
        df_.clear();
        n_docs_ = collection.size();
        for (const auto& d : collection) {
            auto toks = text::normalized_tokens(d);
            std::sort(toks.begin(), toks.end());
            toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
            for (auto& t : toks) ++df_[t];
        }
    }

    double idf(const std::string& term) const {
        const auto it = df_.find(term);
        const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
        return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + df)) + 1.0;
    }

    SparseVector vectorize(std::string_view s) const {
        SparseVector v;
        for (const auto& t : text::normalized_tokens(s)) v[t] += 1.0;
        if (v.empty()) throw Error("TF-IDF undefined for text without tokens");
        double norm2 = 0.0;
        for (auto& [term, w] : v) {
            w *= idf(term);
            norm2 += w * w;
        }
        const double norm = std::sqrt(norm2);
        for (auto& [term, w] : v) w /= norm;
        return v;
    }

    double cosine(std::string_view a, std::string_view b) const {
        const auto va = vectorize(a);
        const auto vb = vectorize(b);
        if (va == vb) return 1.0;
        // Merge over sorted keys; summation order is independent of argument order.
        double dot = 0.0;
        auto ia = va.begin();
        auto ib = vb.begin();
        while (ia != va.end() && ib != vb.end()) {
            if (ia->first < ib->first) {
                ++ia;
            } else if (ib->first < ia->first) {
                ++ib;
            } else {
                dot += ia->second * ib->second;
                ++ia;
                ++ib;
            }
        }
        return std::clamp(dot, 0.0, 1.0);
    }

    std::size_t document_count() const { return n_docs_; }

private:
    std::map<std::string, std::size_t> df_;
    std::size_t n_docs_ = 0;
};

inline double tfidf_cosine(std::string_view a, std::string_view b, const std::vector<std::string>& collection) {
    return TfidfModel(collection).cosine(a, b);
}

// ---------------------------------------------------------------- embeddings

enum class Granularity { sentence, token };

inline std::string to_string(Granularity g) { return g == Granularity::sentence ? "sentence" : "token"; }

class EmbeddingVector {
public:
    /// Scales values to unit L2 norm. Zero or non-finite vectors are rejected.
    static EmbeddingVector normalized(std::vector<double> values, Granularity g) {
        double norm2 = 0.0;
        for (double v : values) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("cannot normalize a zero or non-finite embedding");
        for (double& v : values) v /= norm;
        return EmbeddingVector(std::move(values), g);
    }

    /// Wraps values already claimed to be unit-norm; checks the claim to 1e-6.
    static EmbeddingVector unit(std::vector<double> values, Granularity g) {
        EmbeddingVector e(std::move(values), g);
        if (std::abs(e.norm() - 1.0) > 1e-6) throw DataError("embedding is not unit-norm (norm " + std::to_string(e.norm()) + ")");
        return e;
    }

    const std::vector<double>& values() const { return values_; }
    Granularity granularity() const { return granularity_; }
    std::size_t dim() const { return values_.size(); }
    double norm() const { return std::sqrt(std::inner_product(values_.begin(), values_.end(), values_.begin(), 0.0)); }

private:
    EmbeddingVector(std::vector<double> v, Granularity g) : values_(std::move(v)), granularity_(g) {}

    std::vector<double> values_;
    Granularity granularity_;
};

namespace detail {

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw Error("embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

}  // namespace detail

inline double embedding_cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.granularity() != Granularity::sentence || b.granularity() != Granularity::sentence)
        throw Error("embedding_cosine expects sentence-level vectors");
    return std::clamp(detail::dot(a, b), -1.0, 1.0);
}

struct BertScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy max-cosine matching without idf weighting or baseline rescaling.
inline BertScore bertscore(const std::vector<EmbeddingVector>& candidate, const std::vector<EmbeddingVector>& reference) {
    if (candidate.empty() || reference.empty()) throw Error("BERTScore needs non-empty token lists");
    for (const auto* side : {&candidate, &reference})
        for (const auto& v : *side)
            if (v.granularity() != Granularity::token) throw Error("BERTScore expects token-level vectors");

    std::vector<double> best_c(candidate.size(), -2.0), best_r(reference.size(), -2.0);
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        for (std::size_t j = 0; j < reference.size(); ++j) {
            const double s = std::clamp(detail::dot(candidate[i], reference[j]), -1.0, 1.0);
            best_c[i] = std::max(best_c[i], s);
            best_r[j] = std::max(best_r[j], s);
        }
    }
    // Sorting before summation makes the result bit-identical under permutation.
    auto mean = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        double sum = 0.0;
        for (double x : v) sum += x;
        return sum / static_cast<double>(v.size());
    };
    BertScore r;
    r.precision = mean(std::move(best_c));
    r.recall = mean(std::move(best_r));
    const double denom = r.precision + r.recall;
    r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / denom;
    return r;
}

inline double bertscore_f1(const std::vector<EmbeddingVector>& candidate, const std::vector<EmbeddingVector>& reference) {
    return bertscore(candidate, reference).f1;
}

/// Mean of the TF-IDF and embedding cosines.
inline double combined_similarity(double tfidf, double embed) { return (tfidf + embed) / 2.0; }

}  // namespace clears
