#pragma once

// Per-variant evaluation, reference baselines, and table rendering
// (metrics as rows, variants as columns).

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "clears/corpus.hpp"
#include "clears/embedder.hpp"
#include "clears/error.hpp"
#include "clears/extract.hpp"
#include "clears/lint.hpp"
#include "clears/metrics.hpp"

namespace clears {

struct MetricRow {
    std::string doc_id;
    // Scores are absent for failed extractions and when a reference is missing.
    std::optional<double> cs_vs_complex;
    std::optional<double> cs_vs_simple;
    std::optional<double> tfidf_vs_complex;
    std::optional<double> tfidf_vs_simple;
    std::optional<double> combined_vs_simple;
    std::optional<double> fh;
    std::optional<double> bertscore_vs_complex;
    std::optional<double> bertscore_vs_simple;
    ExtractStatus extraction_status = ExtractStatus::failed;
    std::vector<std::string> lint_flags;
};

struct MetricField {
    const char* key;
    std::optional<double> MetricRow::*member;
};

inline constexpr MetricField kMetricFields[] = {
    {"cs_vs_complex", &MetricRow::cs_vs_complex},
    {"cs_vs_simple", &MetricRow::cs_vs_simple},
    {"tfidf_vs_complex", &MetricRow::tfidf_vs_complex},
    {"tfidf_vs_simple", &MetricRow::tfidf_vs_simple},
    {"combined_vs_simple", &MetricRow::combined_vs_simple},
    {"fh", &MetricRow::fh},
    {"bertscore_vs_complex", &MetricRow::bertscore_vs_complex},
    {"bertscore_vs_simple", &MetricRow::bertscore_vs_simple},
};

inline constexpr const char* kFailureRate = "failure_rate";

using MetricMap = std::map<std::string, double>;
using Metadata = std::map<std::string, std::string>;

struct VariantReport {
    std::string variant_label;
    std::vector<MetricRow> rows;
    MetricMap aggregates;
    MetricMap baseline;
    Metadata run_metadata;
};

/// Means over id-sorted rows whose extraction did not fail, plus the failure rate.
inline MetricMap compute_aggregates(const std::vector<MetricRow>& rows) {
    std::vector<const MetricRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });

    MetricMap out;
    for (const auto& f : kMetricFields) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto* r : sorted) {
            if (r->extraction_status == ExtractStatus::failed) continue;
            if (const auto& v = r->*f.member) {
                sum += *v;
                ++n;
            }
        }
        if (n) out[f.key] = sum / static_cast<double>(n);
    }
    if (!rows.empty()) {
        const auto failed = std::count_if(rows.begin(), rows.end(),
                                          [](const MetricRow& r) { return r.extraction_status == ExtractStatus::failed; });
        out[kFailureRate] = static_cast<double>(failed) / static_cast<double>(rows.size());
    }
    return out;
}

// ---------------------------------------------------------------- scoring

/// Embeds each distinct text once and serves the vectors by text.
class ScoringContext {
public:
    ScoringContext(Embedder& embedder, bool bertscore) : embedder_(embedder), bertscore_(bertscore) {}

    void prepare(const std::vector<std::string>& texts) {
        std::set<std::string> todo;
        for (const auto& t : texts)
            if (!sentences_.contains(t)) todo.insert(t);
        if (todo.empty()) return;
        const std::vector<std::string> batch(todo.begin(), todo.end());
        auto sv = embedder_.embed_sentences(batch);
        if (sv.size() != batch.size()) throw DataError("embedder returned a wrong number of sentence vectors");
        for (std::size_t i = 0; i < batch.size(); ++i) sentences_.emplace(batch[i], std::move(sv[i]));
        if (bertscore_) {
            auto tv = embedder_.embed_tokens(batch);
            if (tv.size() != batch.size()) throw DataError("embedder returned a wrong number of token lists");
            for (std::size_t i = 0; i < batch.size(); ++i) tokens_.emplace(batch[i], std::move(tv[i]));
        }
    }

    double cs(const std::string& a, const std::string& b) const {
        return embedding_cosine(sentences_.at(a), sentences_.at(b));
    }

    std::optional<double> bertscore(const std::string& candidate, const std::string& reference) const {
        if (!bertscore_) return std::nullopt;
        return bertscore_f1(tokens_.at(candidate).vectors, tokens_.at(reference).vectors);
    }

    bool bertscore_enabled() const { return bertscore_; }
    Embedder& embedder() const { return embedder_; }

private:
    Embedder& embedder_;
    bool bertscore_;
    std::map<std::string, EmbeddingVector> sentences_;
    std::map<std::string, TokenEmbeddings> tokens_;
};

struct BaselineOptions {
    const TfidfModel* tfidf = nullptr;
    bool bertscore = false;
};

namespace detail {

inline std::vector<const Document*> sorted_by_id(const std::vector<Document>& docs) {
    std::vector<const Document*> out;
    for (const auto& d : docs) out.push_back(&d);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
    return out;
}

inline MetricMap baseline_stats(const std::vector<Document>& docs, Task task, ScoringContext& ctx, const TfidfModel* tfidf) {
    std::vector<std::string> texts;
    for (const auto& d : docs) {
        if (!d.reference(task)) throw Error("document " + d.id + " has no " + to_string(task) + " reference");
        texts.push_back(d.source_text);
        texts.push_back(*d.reference(task));
    }
    ctx.prepare(texts);
    MetricMap sums;
    for (const auto* d : sorted_by_id(docs)) {
        const auto& ref = *d->reference(task);
        const double cs = ctx.cs(d->source_text, ref);
        sums["cs_complex_vs_ref"] += cs;
        sums["fh_of_refs"] += fernandez_huerta(std::string_view(ref));
        if (tfidf) {
            const double t = tfidf->cosine(d->source_text, ref);
            sums["tfidf_complex_vs_ref"] += t;
            sums["combined_complex_vs_ref"] += combined_similarity(t, cs);
        }
        if (auto b = ctx.bertscore(d->source_text, ref)) sums["bertscore_complex_vs_ref"] += *b;
    }
    if (!docs.empty())
        for (auto& [k, v] : sums) v /= static_cast<double>(docs.size());
    return sums;
}

}  // namespace detail

/// Mean source/reference embedding cosine and mean reference readability, plus
/// TF-IDF, combined and BERTScore baselines when requested.
inline MetricMap baseline_stats(const std::vector<Document>& docs, Task task, Embedder& embedder,
                                const BaselineOptions& opts = {}) {
    ScoringContext ctx(embedder, opts.bertscore);
    return detail::baseline_stats(docs, task, ctx, opts.tfidf);
}

struct DocOutput {
    std::string id;
    ExtractionResult result;
    std::vector<FewShotExample> examples;
};

struct EvalOptions {
    bool bertscore = true;
    const LintLexicon* lexicon = nullptr;
    LintThresholds thresholds;
    std::size_t workers = 1;
};

namespace detail {

inline MetricRow score_row(const Document& doc, const DocOutput& out, Task task, const ScoringContext& ctx,
                           const TfidfModel& tfidf, const EvalOptions& opts) {
    MetricRow row;
    row.doc_id = doc.id;
    row.extraction_status = out.result.status;
    if (!out.result.ok()) return row;
    const std::string& o = *out.result.simple_text;
    if (text::word_tokens(o).empty()) {
        row.lint_flags.emplace_back("unscorable");
        return row;
    }
    if (opts.lexicon) row.lint_flags = lint_output(o, doc.source_text, out.examples, *opts.lexicon, opts.thresholds).flags();

    row.cs_vs_complex = ctx.cs(o, doc.source_text);
    row.tfidf_vs_complex = tfidf.cosine(o, doc.source_text);
    row.fh = fernandez_huerta(std::string_view(o));
    row.bertscore_vs_complex = ctx.bertscore(o, doc.source_text);
    if (const auto& ref = doc.reference(task)) {
        row.cs_vs_simple = ctx.cs(o, *ref);
        row.tfidf_vs_simple = tfidf.cosine(o, *ref);
        row.combined_vs_simple = combined_similarity(*row.tfidf_vs_simple, *row.cs_vs_simple);
        row.bertscore_vs_simple = ctx.bertscore(o, *ref);
    }
    return row;
}

inline bool scorable(const DocOutput& o) { return o.result.ok() && !text::word_tokens(*o.result.simple_text).empty(); }

}  // namespace detail

/// One row per document. TF-IDF is fitted over this run's sources, references
/// and scorable outputs. Baselines are filled when every document has a reference.
inline VariantReport evaluate_variant(const std::string& label, const std::vector<DocOutput>& outputs,
                                      const std::vector<Document>& docs, Task task, Embedder& embedder,
                                      const EvalOptions& opts = {}) {
    if (outputs.size() != docs.size())
        throw Error("outputs (" + std::to_string(outputs.size()) + ") and documents (" + std::to_string(docs.size()) +
                    ") differ in count");
    std::vector<std::string> misaligned;
    for (std::size_t i = 0; i < docs.size(); ++i)
        if (outputs[i].id != docs[i].id) misaligned.push_back(outputs[i].id + "≠" + docs[i].id);
    if (!misaligned.empty()) throw Error("outputs do not align with documents: " + text::join(misaligned, ", "));

    std::vector<std::string> collection;
    bool all_refs = !docs.empty();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        collection.push_back(docs[i].source_text);
        if (const auto& ref = docs[i].reference(task)) collection.push_back(*ref);
        else all_refs = false;
        if (detail::scorable(outputs[i])) collection.push_back(*outputs[i].result.simple_text);
    }
    const TfidfModel tfidf(collection);

    ScoringContext ctx(embedder, opts.bertscore);
    ctx.prepare(collection);

    VariantReport report;
    report.variant_label = label;
    report.rows.resize(docs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < docs.size(); i = next++) {
            try {
                report.rows[i] = detail::score_row(docs[i], outputs[i], task, ctx, tfidf, opts);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t n = std::clamp<std::size_t>(opts.workers, 1, std::max<std::size_t>(1, docs.size()));
        for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
        work();
    }
    if (error) std::rethrow_exception(error);

    report.aggregates = compute_aggregates(report.rows);
    if (all_refs) report.baseline = detail::baseline_stats(docs, task, ctx, &tfidf);

    report.run_metadata["task"] = to_string(task);
    report.run_metadata["documents"] = std::to_string(docs.size());
    report.run_metadata["embedder"] = embedder.model_id(Granularity::sentence);
    report.run_metadata["tfidf_fit"] = "run collection: sources, references, outputs";
    report.run_metadata["bertscore"] = opts.bertscore ? "plain F1, no idf, no rescaling" : "disabled";
    report.run_metadata["combined_similarity"] = "mean of TF-IDF cosine and embedding cosine";
    report.run_metadata["failed_rows"] = "excluded from means, counted in failure_rate";
    return report;
}

// ---------------------------------------------------------------- serialization

inline nlohmann::json row_to_json(const MetricRow& r) {
    nlohmann::json j{{"type", "row"}, {"doc_id", r.doc_id}, {"extraction_status", to_string(r.extraction_status)}};
    for (const auto& f : kMetricFields) {
        const auto& v = r.*f.member;
        j[f.key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    j["lint_flags"] = r.lint_flags;
    return j;
}

inline MetricRow row_from_json(const nlohmann::json& j) {
    MetricRow r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.extraction_status = parse_extract_status(j.at("extraction_status").get<std::string>());
    for (const auto& f : kMetricFields)
        if (j.contains(f.key) && !j[f.key].is_null()) r.*f.member = j[f.key].get<double>();
    r.lint_flags = j.value("lint_flags", std::vector<std::string>{});
    return r;
}

/// First line: report header (label, aggregates, baseline, metadata); then one line per row.
inline std::string report_to_jsonl(const VariantReport& rep) {
    std::string out = nlohmann::json{{"type", "report"},
                                     {"variant", rep.variant_label},
                                     {"aggregates", rep.aggregates},
                                     {"baseline", rep.baseline},
                                     {"run_metadata", rep.run_metadata}}
                          .dump() +
                      "\n";
    for (const auto& r : rep.rows) out += row_to_json(r).dump() + "\n";
    return out;
}

inline VariantReport report_from_jsonl(std::string_view s) {
    VariantReport rep;
    bool header = false;
    std::size_t line_no = 0;
    for (const auto& line : text::split_lines(s)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "report") {
                rep.variant_label = j.at("variant").get<std::string>();
                rep.aggregates = j.at("aggregates").get<MetricMap>();
                rep.baseline = j.at("baseline").get<MetricMap>();
                rep.run_metadata = j.at("run_metadata").get<Metadata>();
                header = true;
            } else if (type == "row") {
                rep.rows.push_back(row_from_json(j));
            } else {
                throw DataError("unknown record type '" + type + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("rows line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header) throw DataError("rows file has no report header line");
    return rep;
}

// ---------------------------------------------------------------- rendering

enum class ReportFormat { markdown, csv };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "csv") return ReportFormat::csv;
    throw Error("unknown report format '" + std::string(s) + "'");
}

struct ReportLine {
    const char* key;
    const char* label;
    const char* baseline_key;  // nullptr: no reference column value
    int decimals;
};

inline constexpr ReportLine kReportLines[] = {
    {"cs_vs_complex", "Mean CS with complex", "cs_complex_vs_ref", 4},
    {"cs_vs_simple", "Mean CS with simple", nullptr, 4},
    {"tfidf_vs_complex", "Mean TF-IDF cosine with complex", "tfidf_complex_vs_ref", 4},
    {"tfidf_vs_simple", "Mean TF-IDF cosine with simple", nullptr, 4},
    {"combined_vs_simple", "Mean combined sim. ((TF-IDF + CS) / 2) with simple", nullptr, 4},
    {"fh", "Mean Fernández-Huerta score", "fh_of_refs", 2},
    {"bertscore_vs_complex", "Mean BERTScore (F1) with complex", "bertscore_complex_vs_ref", 4},
    {"bertscore_vs_simple", "Mean BERTScore (F1) with simple", nullptr, 4},
    {kFailureRate, "Extraction failure rate", nullptr, 4},
};

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s == "-0.0000" || s == "-0.00") s.erase(0, 1);
    return s;
}

namespace detail {

inline std::string md_cell(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += "\\|";
        else if (c == '\n') out += ' ';
        else out += c;
    }
    return out;
}

inline std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string md_row(const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + md_cell(c) + " |";
    return s + "\n";
}

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::vector<std::string> q;
    for (const auto& c : cells) q.push_back(csv_cell(c));
    return text::join(q, ",") + "\n";
}

}  // namespace detail

/// Metrics as rows, one column per report in the given order, preceded by the
/// reference column taken from the first report that has a baseline. Metric
/// lines with no value anywhere are omitted; run metadata follows as a second table.
inline std::string render_comparison(const std::vector<VariantReport>& reports, ReportFormat format) {
    const MetricMap* baseline = nullptr;
    for (const auto& r : reports)
        if (!r.baseline.empty()) {
            baseline = &r.baseline;
            break;
        }
    const bool md = format == ReportFormat::markdown;
    auto row = [&](const std::vector<std::string>& cells) { return md ? detail::md_row(cells) : detail::csv_row(cells); };

    std::string out;
    std::vector<std::string> header{md ? "Metric" : "metric", md ? "Reference simple" : "reference_simple"};
    for (const auto& r : reports) header.push_back(r.variant_label);
    out += row(header);
    if (md) out += row(std::vector<std::string>(header.size(), "---"));

    for (const auto& line : kReportLines) {
        std::vector<std::string> cells{md ? line.label : line.key};
        bool any = false;
        std::string base = "N/A";
        if (baseline && line.baseline_key) {
            if (auto it = baseline->find(line.baseline_key); it != baseline->end()) {
                base = format_fixed(it->second, line.decimals);
                any = true;
            }
        }
        cells.push_back(base);
        for (const auto& r : reports) {
            if (auto it = r.aggregates.find(line.key); it != r.aggregates.end()) {
                cells.push_back(format_fixed(it->second, line.decimals));
                any = true;
            } else {
                cells.push_back("N/A");
            }
        }
        if (any) out += row(cells);
    }

    std::set<std::string> keys;
    for (const auto& r : reports)
        for (const auto& [k, v] : r.run_metadata) keys.insert(k);
    if (keys.empty()) return out;

    if (md) {
        out += "\n";
        std::vector<std::string> mh{"Run metadata"};
        for (const auto& r : reports) mh.push_back(r.variant_label);
        out += row(mh);
        out += row(std::vector<std::string>(mh.size(), "---"));
    }
    for (const auto& k : keys) {
        std::vector<std::string> cells{md ? k : "meta." + k};
        if (!md) cells.emplace_back("");
        for (const auto& r : reports) {
            const auto it = r.run_metadata.find(k);
            cells.push_back(it == r.run_metadata.end() ? "" : it->second);
        }
        out += row(cells);
    }
    return out;
}

inline std::string render_report(const VariantReport& report, ReportFormat format) {
    return render_comparison({report}, format);
}

}  // namespace clears
