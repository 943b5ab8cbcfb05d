#pragma once

// Run configuration and the adapt / eval / sweep / lint / report commands.
// tools/clears.cpp is a thin argument parser over these functions.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "clears/corpus.hpp"
#include "clears/embedder.hpp"
#include "clears/error.hpp"
#include "clears/evalreport.hpp"
#include "clears/extract.hpp"
#include "clears/lint.hpp"
#include "clears/llm_client.hpp"
#include "clears/metrics.hpp"
#include "clears/prompts.hpp"

#ifndef CLEARS_DATA_DIR
#define CLEARS_DATA_DIR "data"
#endif

namespace clears {

namespace fs = std::filesystem;

enum class EmbedderKind { stub, http };

inline EmbedderKind parse_embedder_kind(std::string_view s) {
    if (s == "stub") return EmbedderKind::stub;
    if (s == "http") return EmbedderKind::http;
    throw Error("unknown embedder '" + std::string(s) + "' (expected stub or http)");
}

inline std::string to_string(EmbedderKind k) { return k == EmbedderKind::stub ? "stub" : "http"; }

struct EmbedderSettings {
    EmbedderKind kind = EmbedderKind::stub;
    std::string url;
    std::size_t batch_size = 32;
    bool bertscore = true;
};

struct RunConfig {
    fs::path corpus_path;
    std::optional<CorpusFormat> corpus_format;
    std::optional<fs::path> train_path;
    Task task = Task::PL;
    std::string variant = "P7";
    std::vector<std::string> variants{"P5", "P6", "P7"};
    Language language = Language::ES;
    std::optional<std::size_t> subset_n;
    uint64_t seed = 42;
    std::optional<uint64_t> shots_seed;
    Backend backend;
    std::optional<fs::path> mock_fixtures;
    DecodeParams decode_params = default_decode_params();
    EmbedderSettings embedder;
    fs::path data_dir = CLEARS_DATA_DIR;
    std::optional<fs::path> prompts_dir;
    std::optional<fs::path> cache_dir;
    fs::path out_dir = "out";
    LintThresholds thresholds;
    bool fallback_raw = false;
    std::size_t workers = 4;

    uint64_t effective_shots_seed() const { return shots_seed.value_or(seed); }
    fs::path effective_prompts_dir() const { return prompts_dir.value_or(data_dir / "prompts"); }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace detail

/// Applies a JSON config document. Relative paths resolve against base_dir.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j, const fs::path& base_dir = {}) {
    using detail::resolve;
    try {
        if (j.contains("corpus")) {
            const auto& c = j["corpus"];
            if (c.contains("path")) cfg.corpus_path = resolve(base_dir, c["path"].get<std::string>());
            if (c.contains("format")) cfg.corpus_format = parse_corpus_format(c["format"].get<std::string>());
            if (c.contains("train_path")) cfg.train_path = resolve(base_dir, c["train_path"].get<std::string>());
        }
        if (j.contains("task")) cfg.task = parse_task(j["task"].get<std::string>());
        if (j.contains("variant")) cfg.variant = normalize_variant(j["variant"].get<std::string>());
        if (j.contains("variants")) {
            cfg.variants.clear();
            for (const auto& v : j["variants"]) cfg.variants.push_back(normalize_variant(v.get<std::string>()));
        }
        if (j.contains("language")) cfg.language = parse_language(j["language"].get<std::string>());
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("shots_seed")) cfg.shots_seed = j["shots_seed"].get<uint64_t>();
        if (j.contains("subset")) {
            const auto& s = j["subset"];
            if (s.contains("n") && !s["n"].is_null()) cfg.subset_n = s["n"].get<std::size_t>();
            if (s.contains("seed")) cfg.seed = s["seed"].get<uint64_t>();
        }
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            auto& be = cfg.backend;
            if (b.contains("kind")) be.kind = parse_backend_kind(b["kind"].get<std::string>());
            if (b.contains("endpoint_url")) be.endpoint_url = b["endpoint_url"].get<std::string>();
            if (b.contains("auth_token_env")) be.auth_token_env = b["auth_token_env"].get<std::string>();
            if (b.contains("model_id")) be.model_id = b["model_id"].get<std::string>();
            if (b.contains("mock_mode")) be.mock_mode = parse_mock_mode(b["mock_mode"].get<std::string>());
            if (b.contains("fixtures")) cfg.mock_fixtures = resolve(base_dir, b["fixtures"].get<std::string>());
            if (b.contains("retries")) be.retries = b["retries"].get<int>();
            if (b.contains("backoff_ms")) be.backoff_base = std::chrono::milliseconds(b["backoff_ms"].get<long>());
            if (b.contains("in_flight")) be.in_flight = b["in_flight"].get<std::size_t>();
            if (b.contains("timeout_s")) be.timeout = std::chrono::seconds(b["timeout_s"].get<long>());
            if (b.contains("decode_params"))
                for (const auto& [k, v] : b["decode_params"].items()) cfg.decode_params[k] = v;
        }
        if (j.contains("embedder")) {
            const auto& e = j["embedder"];
            if (e.contains("kind")) cfg.embedder.kind = parse_embedder_kind(e["kind"].get<std::string>());
            if (e.contains("url")) cfg.embedder.url = e["url"].get<std::string>();
            if (e.contains("batch_size")) cfg.embedder.batch_size = e["batch_size"].get<std::size_t>();
            if (e.contains("bertscore")) cfg.embedder.bertscore = e["bertscore"].get<bool>();
        }
        if (j.contains("data_dir")) cfg.data_dir = resolve(base_dir, j["data_dir"].get<std::string>());
        if (j.contains("prompts_dir")) cfg.prompts_dir = resolve(base_dir, j["prompts_dir"].get<std::string>());
        if (j.contains("cache_dir")) cfg.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
        if (j.contains("out_dir")) cfg.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
        if (j.contains("thresholds")) {
            const auto& t = j["thresholds"];
            if (t.contains("echo")) cfg.thresholds.echo = t["echo"].get<double>();
            if (t.contains("language_margin")) cfg.thresholds.language_margin = t["language_margin"].get<double>();
            if (t.contains("min_language_tokens"))
                cfg.thresholds.min_language_tokens = t["min_language_tokens"].get<std::size_t>();
        }
        if (j.contains("fallback_raw")) cfg.fallback_raw = j["fallback_raw"].get<bool>();
        if (j.contains("workers")) cfg.workers = j["workers"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad config value: ") + e.what());
    }
}

inline RunConfig load_config(const fs::path& path) {
    RunConfig cfg;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    apply_config_json(cfg, j, path.parent_path());
    return cfg;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
}

/// CLEARS_TASK, CLEARS_VARIANT, CLEARS_SUBSET_N, CLEARS_SEED, CLEARS_BACKEND,
/// CLEARS_EMBEDDER, CLEARS_EMBEDDER_URL, CLEARS_ENDPOINT_URL, CLEARS_MODEL_ID,
/// CLEARS_AUTH_TOKEN_ENV, CLEARS_CACHE_DIR, CLEARS_OUT_DIR.
inline void apply_env(RunConfig& cfg, const EnvLookup& env) {
    auto num = [](const std::string& name, const std::string& v) {
        try {
            std::size_t used = 0;
            const auto n = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw Error(name + " must be a non-negative integer, got '" + v + "'");
        }
    };
    if (auto v = env("CLEARS_TASK")) cfg.task = parse_task(*v);
    if (auto v = env("CLEARS_VARIANT")) cfg.variant = normalize_variant(*v);
    if (auto v = env("CLEARS_SUBSET_N")) cfg.subset_n = num("CLEARS_SUBSET_N", *v);
    if (auto v = env("CLEARS_SEED")) cfg.seed = num("CLEARS_SEED", *v);
    if (auto v = env("CLEARS_BACKEND")) cfg.backend.kind = parse_backend_kind(*v);
    if (auto v = env("CLEARS_EMBEDDER")) cfg.embedder.kind = parse_embedder_kind(*v);
    if (auto v = env("CLEARS_EMBEDDER_URL")) cfg.embedder.url = *v;
    if (auto v = env("CLEARS_ENDPOINT_URL")) cfg.backend.endpoint_url = *v;
    if (auto v = env("CLEARS_MODEL_ID")) cfg.backend.model_id = *v;
    if (auto v = env("CLEARS_AUTH_TOKEN_ENV")) cfg.backend.auth_token_env = *v;
    if (auto v = env("CLEARS_CACHE_DIR")) cfg.cache_dir = fs::path(*v);
    if (auto v = env("CLEARS_OUT_DIR")) cfg.out_dir = fs::path(*v);
}

/// Checks the referenced paths and settings that do not need the corpus loaded.
inline void validate_config(const RunConfig& cfg) {
    if (cfg.corpus_path.empty()) throw Error("config: corpus path is required");
    if (!fs::exists(cfg.corpus_path)) throw Error("config: corpus not found: " + cfg.corpus_path.string());
    if (cfg.train_path && !fs::exists(*cfg.train_path)) throw Error("config: train corpus not found: " + cfg.train_path->string());
    if (cfg.mock_fixtures && !fs::exists(*cfg.mock_fixtures))
        throw Error("config: mock fixtures not found: " + cfg.mock_fixtures->string());
    if (!fs::is_directory(cfg.effective_prompts_dir()))
        throw Error("config: prompts directory not found: " + cfg.effective_prompts_dir().string());
    if (!fs::is_directory(cfg.data_dir / "lint")) throw Error("config: lint data not found under " + cfg.data_dir.string());
    if (cfg.embedder.kind == EmbedderKind::http && cfg.embedder.url.empty()) throw Error("config: http embedder needs a url");
    if (cfg.workers == 0) throw Error("config: workers must be >= 1");
    Backend b = cfg.backend;
    if (cfg.mock_fixtures) b.mock_script.emplace();
    b.validate();
}

// ---------------------------------------------------------------- adapt records

struct AdaptRecord {
    std::string id;
    std::string variant;
    std::string model_id;
    std::string raw;
    ExtractionResult extraction;
    std::vector<std::string> example_ids;
    std::string error;  // backend failure message; extraction is failed then
};

inline nlohmann::json to_json(const AdaptRecord& r) {
    nlohmann::json repairs = nlohmann::json::array();
    for (auto rep : r.extraction.repairs) repairs.push_back(to_string(rep));
    nlohmann::json j{{"id", r.id},
                     {"variant", r.variant},
                     {"model_id", r.model_id},
                     {"raw", r.raw},
                     {"simple_text", r.extraction.simple_text ? nlohmann::json(*r.extraction.simple_text) : nlohmann::json()},
                     {"status", to_string(r.extraction.status)},
                     {"repairs", repairs},
                     {"notes", r.extraction.notes},
                     {"example_ids", r.example_ids}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

inline AdaptRecord adapt_record_from_json(const nlohmann::json& j) {
    AdaptRecord r;
    r.id = j.at("id").get<std::string>();
    r.variant = j.value("variant", "");
    r.model_id = j.value("model_id", "");
    r.raw = j.value("raw", "");
    if (j.contains("simple_text") && !j["simple_text"].is_null()) r.extraction.simple_text = j["simple_text"].get<std::string>();
    r.extraction.status = parse_extract_status(j.at("status").get<std::string>());
    for (const auto& s : j.value("repairs", std::vector<std::string>{})) r.extraction.repairs.push_back(parse_repair(s));
    r.extraction.notes = j.value("notes", "");
    r.example_ids = j.value("example_ids", std::vector<std::string>{});
    r.error = j.value("error", "");
    return r;
}

inline std::vector<AdaptRecord> load_adapt_records(const fs::path& path) {
    std::vector<AdaptRecord> out;
    std::size_t line_no = 0;
    const std::string body = text::read_file(path);
    for (const auto& line : text::split_lines(body)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(adapt_record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_text_file(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << body;
    if (!out) throw Error("write failed: " + path.string());
}

inline std::string utc_timestamp() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------- pipeline

struct AdaptOutcome {
    std::string variant;
    std::vector<AdaptRecord> records;
    std::vector<std::string> failed_ids;  // backend failures
    std::size_t succeeded = 0;            // extraction not failed
    std::size_t backend_calls = 0;
    fs::path path;
};

struct LintOutcome {
    std::map<std::string, std::size_t> flag_counts;
    fs::path path;
};

/// Resolved inputs shared by all commands of one invocation.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg, std::shared_ptr<Transport> llm_transport = nullptr,
                      std::shared_ptr<Transport> embed_transport = nullptr, std::ostream* log = &std::cerr)
        : cfg_(std::move(cfg)), llm_transport_(std::move(llm_transport)), embed_transport_(std::move(embed_transport)), log_(log) {
        validate_config(cfg_);
        registry_ = PromptRegistry::load(cfg_.effective_prompts_dir());
        lexicon_ = LintLexicon::load(cfg_.data_dir / "lint");
        corpus_ = load_corpus(cfg_.corpus_path, cfg_.corpus_format.value_or(corpus_format_for(cfg_.corpus_path)));
        if (cfg_.train_path) {
            pool_ = load_corpus(*cfg_.train_path, corpus_format_for(*cfg_.train_path));
            make_split(pool_, corpus_);
        }
        const std::size_t n = cfg_.subset_n.value_or(corpus_.size());
        subset_ = sample_subset(corpus_, n, cfg_.seed);
        if (!cfg_.train_path) {
            std::set<std::string> ids;
            for (const auto& d : subset_) ids.insert(d.id);
            for (const auto& d : corpus_)
                if (!ids.contains(d.id)) pool_.push_back(d);
        }
        for (const auto& d : corpus_) by_id_.emplace(d.id, &d);
        for (const auto& d : pool_) pool_by_id_.emplace(d.id, &d);

        Backend b = cfg_.backend;
        if (cfg_.mock_fixtures) b.mock_script = load_mock_script(*cfg_.mock_fixtures);
        client_ = std::make_unique<LlmClient>(b, cfg_.cache_dir, llm_transport_);

        if (cfg_.embedder.kind == EmbedderKind::stub) embedder_ = std::make_unique<StubEmbedder>();
        else embedder_ = std::make_unique<HttpEmbedder>(cfg_.embedder.url, embed_transport_, cfg_.embedder.batch_size);
    }

    const RunConfig& config() const { return cfg_; }
    const std::vector<Document>& subset() const { return subset_; }
    const PromptRegistry& registry() const { return registry_; }
    LlmClient& client() { return *client_; }

    fs::path adapt_path(const std::string& variant) const { return cfg_.out_dir / ("adapt." + variant + ".jsonl"); }

    /// One record per subset document, in subset order. Backend failures become
    /// failed records carrying the error; the file is written either way.
    AdaptOutcome adapt(std::string variant) {
        variant = normalize_variant(variant);
        const PromptSpec& spec = registry_.get(variant, cfg_.task, cfg_.language);
        std::set<std::string> exclude;
        for (const auto& d : subset_) exclude.insert(d.id);
        const auto examples = select_few_shot(pool_, spec.shots, exclude, cfg_.effective_shots_seed(), cfg_.task);
        const GuidelineSet* gl = spec.include_guidelines ? &registry_.guidelines(spec.language) : nullptr;
        ExtractOptions xopts;
        xopts.fallback_raw_on_dict_failure = cfg_.fallback_raw;

        AdaptOutcome out;
        out.variant = variant;
        out.records.resize(subset_.size());
        const std::size_t calls_before = client_->backend_calls();
        parallel_for(subset_.size(), [&](std::size_t i) {
            const Document& doc = subset_[i];
            AdaptRecord& rec = out.records[i];
            rec.id = doc.id;
            rec.variant = variant;
            for (const auto& ex : examples) rec.example_ids.push_back(ex.id);
            const auto req = render_messages(spec, doc, examples, gl, cfg_.backend.model_id, cfg_.decode_params);
            try {
                const auto c = client_->complete(req);
                rec.model_id = c.model_id;
                rec.raw = c.raw_text;
                rec.extraction = extract(c.raw_text, spec.output_mode, xopts);
            } catch (const BackendError& e) {
                rec.model_id = req.model_id;
                rec.extraction = {};
                rec.error = e.what();
            }
        });
        out.backend_calls = client_->backend_calls() - calls_before;

        std::string body;
        for (const auto& r : out.records) {
            body += to_json(r).dump() + "\n";
            if (!r.error.empty()) out.failed_ids.push_back(r.id);
            if (r.extraction.ok()) ++out.succeeded;
        }
        out.path = adapt_path(variant);
        write_text_file(out.path, body);
        log() << "adapt " << variant << ": " << out.succeeded << "/" << out.records.size() << " extracted, "
              << out.failed_ids.size() << " backend failures, " << out.backend_calls << " backend calls -> "
              << out.path.string() << "\n";
        if (!out.failed_ids.empty()) log() << "  failed ids: " << text::join(out.failed_ids, ", ") << "\n";
        return out;
    }

    /// Scores an adapt file against the corpus and writes report.<v>.{md,csv},
    /// rows.<v>.jsonl and run.<v>.json (the only file with timestamps).
    VariantReport eval(const fs::path& adapt_file, std::ostream* table_out = nullptr) {
        const std::string started = utc_timestamp();
        const auto records = load_adapt_records(adapt_file);
        if (records.empty()) throw Error(adapt_file.string() + ": no records");
        const std::string variant = records.front().variant.empty() ? "output" : records.front().variant;

        std::vector<std::string> missing;
        std::vector<Document> docs;
        std::vector<DocOutput> outputs;
        for (const auto& r : records) {
            const auto it = by_id_.find(r.id);
            if (it == by_id_.end()) {
                missing.push_back(r.id);
                continue;
            }
            docs.push_back(*it->second);
            DocOutput o{r.id, r.extraction, {}};
            for (const auto& ex_id : r.example_ids) {
                if (auto p = pool_by_id_.find(ex_id); p != pool_by_id_.end() && p->second->reference(cfg_.task))
                    o.examples.push_back({ex_id, p->second->source_text, *p->second->reference(cfg_.task)});
            }
            outputs.push_back(std::move(o));
        }
        if (!missing.empty()) throw Error("adapt output ids not in corpus: " + text::join(missing, ", "));

        EvalOptions eo;
        eo.bertscore = cfg_.embedder.bertscore;
        eo.lexicon = &lexicon_;
        eo.thresholds = cfg_.thresholds;
        eo.workers = cfg_.workers;
        VariantReport rep = evaluate_variant(variant, outputs, docs, cfg_.task, *embedder_, eo);
        add_run_metadata(rep, records);

        write_text_file(cfg_.out_dir / ("report." + variant + ".md"), render_report(rep, ReportFormat::markdown));
        write_text_file(cfg_.out_dir / ("report." + variant + ".csv"), render_report(rep, ReportFormat::csv));
        write_text_file(cfg_.out_dir / ("rows." + variant + ".jsonl"), report_to_jsonl(rep));
        nlohmann::json run{{"variant", variant},
                           {"adapt_file", adapt_file.string()},
                           {"started_at", started},
                           {"finished_at", utc_timestamp()},
                           {"run_metadata", rep.run_metadata}};
        write_text_file(cfg_.out_dir / ("run." + variant + ".json"), run.dump(2) + "\n");
        if (table_out) *table_out << render_report(rep, ReportFormat::markdown);
        return rep;
    }

    struct SweepOutcome {
        std::vector<VariantReport> reports;
        std::vector<AdaptOutcome> adapts;
        std::string failed_variant;
        std::string error;
        fs::path compare_path;
    };

    /// adapt + eval per variant over the shared subset. A failing variant stops
    /// the sweep; reports of completed variants are still merged and written.
    SweepOutcome sweep(const std::vector<std::string>& variants, std::ostream* table_out = nullptr) {
        for (const auto& v : variants) registry_.get(v, cfg_.task, cfg_.language);
        SweepOutcome out;
        for (const auto& v : variants) {
            try {
                auto a = adapt(v);
                const bool backend_failed = !a.failed_ids.empty();
                out.reports.push_back(eval(a.path));
                out.adapts.push_back(std::move(a));
                if (backend_failed) {
                    out.failed_variant = normalize_variant(v);
                    out.error = "backend failures for ids: " + text::join(out.adapts.back().failed_ids, ", ");
                    break;
                }
            } catch (const std::exception& e) {
                out.failed_variant = normalize_variant(v);
                out.error = e.what();
                break;
            }
        }
        out.compare_path = cfg_.out_dir / "report.compare.md";
        write_text_file(out.compare_path, render_comparison(out.reports, ReportFormat::markdown));
        write_text_file(cfg_.out_dir / "report.compare.csv", render_comparison(out.reports, ReportFormat::csv));
        if (table_out) *table_out << render_comparison(out.reports, ReportFormat::markdown);
        return out;
    }

    /// Runs every detector on each successfully extracted record.
    LintOutcome lint(const fs::path& adapt_file) {
        const auto records = load_adapt_records(adapt_file);
        LintOutcome out;
        std::string body;
        for (const auto& r : records) {
            nlohmann::json j{{"id", r.id}, {"status", to_string(r.extraction.status)}, {"lint", nullptr}};
            const auto it = by_id_.find(r.id);
            if (it == by_id_.end()) throw Error("adapt output id not in corpus: " + r.id);
            if (r.extraction.ok()) {
                std::vector<FewShotExample> examples;
                for (const auto& ex_id : r.example_ids)
                    if (auto p = pool_by_id_.find(ex_id); p != pool_by_id_.end() && p->second->reference(cfg_.task))
                        examples.push_back({ex_id, p->second->source_text, *p->second->reference(cfg_.task)});
                const auto rep = lint_output(*r.extraction.simple_text, it->second->source_text, examples, lexicon_, cfg_.thresholds);
                j["lint"] = rep.to_json();
                for (const auto& f : rep.flags()) ++out.flag_counts[f];
            } else {
                ++out.flag_counts["extraction_failed"];
            }
            body += j.dump() + "\n";
        }
        const std::string variant = records.empty() || records.front().variant.empty() ? "output" : records.front().variant;
        out.path = cfg_.out_dir / ("lint." + variant + ".jsonl");
        write_text_file(out.path, body);
        return out;
    }

private:
    std::ostream& log() {
        static std::ostream discard(nullptr);
        return log_ ? *log_ : discard;
    }

    template <typename Fn>
    void parallel_for(std::size_t n, Fn&& fn) {
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex m;
        auto work = [&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                }
            }
        };
        {
            std::vector<std::jthread> pool;
            const std::size_t w = std::clamp<std::size_t>(cfg_.workers, 1, std::max<std::size_t>(1, n));
            for (std::size_t k = 1; k < w; ++k) pool.emplace_back(work);
            work();
        }
        if (error) std::rethrow_exception(error);
    }

    void add_run_metadata(VariantReport& rep, const std::vector<AdaptRecord>& records) const {
        auto& m = rep.run_metadata;
        m["variant"] = rep.variant_label;
        m["language"] = to_string(cfg_.language);
        if (registry_.contains(rep.variant_label, cfg_.task, cfg_.language)) {
            const auto& spec = registry_.get(rep.variant_label, cfg_.task, cfg_.language);
            m["prompt"] = spec.key();
            m["prompt_provenance"] = to_string(spec.provenance);
            m["prompt_shots"] = std::to_string(spec.shots);
            m["prompt_guidelines"] = spec.include_guidelines ? "yes" : "no";
            m["prompt_output_mode"] = to_string(spec.output_mode);
        }
        std::set<std::string> models;
        for (const auto& r : records)
            if (!r.model_id.empty()) models.insert(r.model_id);
        m["model_id"] = text::join(std::vector<std::string>(models.begin(), models.end()), ";");
        std::string backend = to_string(cfg_.backend.kind);
        if (cfg_.backend.kind == BackendKind::mock) backend += "/" + to_string(cfg_.backend.effective_mock_mode());
        m["backend"] = backend;
        m["subset_size"] = std::to_string(subset_.size());
        m["subset_seed"] = std::to_string(cfg_.seed);
        m["shots_seed"] = std::to_string(cfg_.effective_shots_seed());
        if (!records.empty()) m["example_ids"] = text::join(records.front().example_ids, ";");
    }

    RunConfig cfg_;
    std::shared_ptr<Transport> llm_transport_;
    std::shared_ptr<Transport> embed_transport_;
    std::ostream* log_;
    PromptRegistry registry_;
    LintLexicon lexicon_;
    std::vector<Document> corpus_;
    std::vector<Document> pool_;
    std::vector<Document> subset_;
    std::map<std::string, const Document*> by_id_;
    std::map<std::string, const Document*> pool_by_id_;
    std::unique_ptr<LlmClient> client_;
    std::unique_ptr<Embedder> embedder_;
};

/// Merges rows files into one comparison, after checking each file's stored
/// aggregates against a recount of its rows.
inline std::string merge_rows_files(const std::vector<fs::path>& paths, ReportFormat format) {
    std::vector<VariantReport> reports;
    for (const auto& p : paths) {
        auto rep = report_from_jsonl(text::read_file(p));
        if (compute_aggregates(rep.rows) != rep.aggregates)
            throw DataError(p.string() + ": stored aggregates do not match the rows");
        reports.push_back(std::move(rep));
    }
    return render_comparison(reports, format);
}

}  // namespace clears
