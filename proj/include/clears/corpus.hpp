#pragma once

// Corpus loading (JSONL / CSV), seeded subsetting and few-shot exemplar selection.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clears/error.hpp"
#include "clears/text.hpp"

namespace clears {

enum class Task { PL, E2R };

inline std::string to_string(Task t) { return t == Task::PL ? "PL" : "E2R"; }

inline Task parse_task(std::string_view s) {
    const auto l = text::to_lower(s);
    if (l == "pl") return Task::PL;
    if (l == "e2r") return Task::E2R;
    throw Error("unknown task '" + std::string(s) + "' (expected pl or e2r)");
}

struct Document {
    std::string id;
    std::string source_text;
    std::optional<std::string> ref_pl;
    std::optional<std::string> ref_e2r;

    const std::optional<std::string>& reference(Task t) const { return t == Task::PL ? ref_pl : ref_e2r; }

    friend bool operator==(const Document&, const Document&) = default;
};

struct CorpusSplit {
    std::vector<Document> train;
    std::vector<Document> test;
};

/// Builds a split, rejecting any id present on both sides.
inline CorpusSplit make_split(std::vector<Document> train, std::vector<Document> test) {
    std::unordered_set<std::string> ids;
    for (const auto& d : train) ids.insert(d.id);
    for (const auto& d : test)
        if (ids.contains(d.id)) throw DataError("document '" + d.id + "' appears in both train and test");
    return {std::move(train), std::move(test)};
}

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "csv") return CorpusFormat::csv;
    throw Error("unknown corpus format '" + std::string(s) + "' (expected jsonl or csv)");
}

inline CorpusFormat corpus_format_for(const std::filesystem::path& p) {
    return p.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

namespace detail {

inline std::optional<std::string> clean_ref(std::optional<std::string> s) {
    if (!s) return s;
    std::string v = text::nfc(text::trim_trailing_newlines(std::move(*s)));
    if (text::trim(v).empty()) return std::nullopt;
    return v;
}

inline Document make_document(std::string id, std::string source, std::optional<std::string> pl,
                              std::optional<std::string> e2r, const std::string& where) {
    Document d;
    d.id = std::move(id);
    if (d.id.empty()) throw DataError(where + ": empty id");
    d.source_text = text::nfc(text::trim_trailing_newlines(std::move(source)));
    if (text::trim(d.source_text).empty()) throw DataError(where + ": empty source text for id '" + d.id + "'");
    d.ref_pl = clean_ref(std::move(pl));
    d.ref_e2r = clean_ref(std::move(e2r));
    return d;
}

inline void check_unique(const std::vector<Document>& docs) {
    std::unordered_set<std::string> seen;
    for (const auto& d : docs)
        if (!seen.insert(d.id).second) throw DataError("duplicate document id '" + d.id + "'");
}

inline std::vector<Document> parse_jsonl(std::string_view body) {
    std::vector<Document> docs;
    std::size_t line_no = 0;
    for (auto line : text::split_lines(body)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": malformed JSON record: " + e.what());
        }
        if (!j.is_object()) throw DataError(where + ": record is not a JSON object");
        auto str = [&](const char* key, bool required) -> std::optional<std::string> {
            auto it = j.find(key);
            if (it == j.end() || it->is_null()) {
                if (required) throw DataError(where + ": missing field '" + key + "'");
                return std::nullopt;
            }
            if (!it->is_string()) throw DataError(where + ": field '" + key + "' is not a string");
            return it->get<std::string>();
        };
        docs.push_back(make_document(*str("id", true), *str("source", true), str("ref_pl", false),
                                     str("ref_e2r", false), where));
    }
    return docs;
}

/// RFC 4180 reader: comma separator, double-quote quoting, "" escapes, quoted newlines.
/// Each record is returned with the 1-based line on which it starts.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv_records(std::string_view body) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false, field_quoted = false, any = false;
    std::size_t line = 1, record_line = 1;

    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        field_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        records.emplace_back(record_line, std::move(fields));
        fields.clear();
        any = false;
    };

    std::size_t i = 0;
    if (body.starts_with("\xEF\xBB\xBF")) i = 3;
    for (; i < body.size(); ++i) {
        const char c = body[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < body.size() && body[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (!any) record_line = line;
        any = true;
        if (c == '"') {
            if (!field.empty() || field_quoted)
                throw DataError("line " + std::to_string(line) + ": stray quote inside unquoted CSV field");
            in_quotes = field_quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < body.size() && body[i + 1] == '\n') ++i;
            end_record();
            ++line;
        } else {
            if (field_quoted)
                throw DataError("line " + std::to_string(line) + ": text after closing quote in CSV field");
            field += c;
        }
    }
    if (in_quotes) throw DataError("line " + std::to_string(record_line) + ": unterminated quoted CSV field");
    if (any) end_record();
    // Drop blank lines (a single empty unquoted field).
    std::erase_if(records, [](const auto& r) { return r.second.size() == 1 && r.second[0].empty(); });
    return records;
}

inline std::vector<Document> parse_csv(std::string_view body) {
    auto records = parse_csv_records(body);
    std::vector<Document> docs;
    if (records.empty()) return docs;
    const std::vector<std::string> expected{"id", "source", "ref_pl", "ref_e2r"};
    if (records.front().second != expected)
        throw DataError("line 1: CSV header must be id,source,ref_pl,ref_e2r");
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [line, f] = records[r];
        const std::string where = "record " + std::to_string(r) + " (line " + std::to_string(line) + ")";
        if (f.size() != 4)
            throw DataError(where + ": expected 4 fields, got " + std::to_string(f.size()));
        auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };
        docs.push_back(make_document(f[0], f[1], opt(f[2]), opt(f[3]), where));
    }
    return docs;
}

inline std::string csv_quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

inline std::vector<Document> parse_corpus(std::string_view body, CorpusFormat format) {
    auto docs = format == CorpusFormat::jsonl ? detail::parse_jsonl(body) : detail::parse_csv(body);
    detail::check_unique(docs);
    return docs;
}

inline std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    if (!std::filesystem::exists(path)) throw DataError("corpus file not found: " + path.string());
    try {
        return parse_corpus(text::read_file(path), format);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline void write_corpus(std::ostream& out, const std::vector<Document>& docs, CorpusFormat format) {
    if (format == CorpusFormat::jsonl) {
        for (const auto& d : docs) {
            nlohmann::json j{{"id", d.id}, {"source", d.source_text}};
            if (d.ref_pl) j["ref_pl"] = *d.ref_pl;
            if (d.ref_e2r) j["ref_e2r"] = *d.ref_e2r;
            out << j.dump() << '\n';
        }
        return;
    }
    out << "id,source,ref_pl,ref_e2r\n";
    for (const auto& d : docs) {
        out << detail::csv_quote(d.id) << ',' << detail::csv_quote(d.source_text) << ','
            << (d.ref_pl ? detail::csv_quote(*d.ref_pl) : "") << ','
            << (d.ref_e2r ? detail::csv_quote(*d.ref_e2r) : "") << '\n';
    }
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<Document>& docs, CorpusFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_corpus(out, docs, format);
}

/// SplitMix64.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, bound) by rejection of the biased low range.
    uint64_t below(uint64_t bound) {
        if (bound == 0) throw Error("SeededRng::below(0)");
        const uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

private:
    uint64_t state_;
};

template <typename T>
void seeded_shuffle(std::vector<T>& items, uint64_t seed) {
    SeededRng rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

/// n distinct documents: Fisher-Yates over the id-sorted list, first n taken.
inline std::vector<Document> sample_subset(const std::vector<Document>& docs, std::size_t n, uint64_t seed) {
    if (n > docs.size())
        throw Error("subset size " + std::to_string(n) + " exceeds corpus size " + std::to_string(docs.size()));
    std::vector<Document> sorted = docs;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    seeded_shuffle(sorted, seed);
    sorted.resize(n);
    return sorted;
}

struct FewShotExample {
    std::string id;
    std::string complex_text;
    std::string simple_text;

    friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

/// k exemplars drawn from documents carrying the task's reference, never from exclude_ids.
inline std::vector<FewShotExample> select_few_shot(const std::vector<Document>& train, std::size_t k,
                                                   const std::set<std::string>& exclude_ids, uint64_t seed,
                                                   Task task) {
    if (k != 0 && k != 1 && k != 3) throw Error("few-shot count must be 0, 1 or 3, got " + std::to_string(k));
    if (k == 0) return {};
    std::vector<const Document*> eligible;
    for (const auto& d : train)
        if (d.reference(task) && !exclude_ids.contains(d.id)) eligible.push_back(&d);
    if (eligible.size() < k)
        throw Error("need " + std::to_string(k) + " few-shot examples with a " + to_string(task) +
                    " reference, only " + std::to_string(eligible.size()) + " eligible");
    std::sort(eligible.begin(), eligible.end(), [](auto* a, auto* b) { return a->id < b->id; });
    seeded_shuffle(eligible, seed);
    std::vector<FewShotExample> out;
    for (std::size_t i = 0; i < k; ++i)
        out.push_back({eligible[i]->id, eligible[i]->source_text, *eligible[i]->reference(task)});
    return out;
}

}  // namespace clears
