// clears: adapt / eval / sweep / lint / report over a Spanish news corpus.
//
// Exit codes: 0 success, 1 usage or data error, 2 backend failures (partial
// output written), 3 no document extracted successfully.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clears/pipeline.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitBackend = 2;
constexpr int kExitNoSuccess = 3;

struct Overrides {
    std::string config;
    std::optional<std::string> task;
    std::optional<std::string> variant;
    std::optional<std::size_t> subset_n;
    std::optional<uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> embedder;
    std::optional<std::string> out_dir;
    std::optional<std::string> corpus;
    std::optional<std::string> cache_dir;
};

clears::RunConfig build_config(const Overrides& o) {
    clears::RunConfig cfg = o.config.empty() ? clears::RunConfig{} : clears::load_config(o.config);
    clears::apply_env(cfg, clears::process_env());
    if (o.task) cfg.task = clears::parse_task(*o.task);
    if (o.variant) cfg.variant = clears::normalize_variant(*o.variant);
    if (o.subset_n) cfg.subset_n = *o.subset_n;
    if (o.seed) cfg.seed = *o.seed;
    if (o.backend) cfg.backend.kind = clears::parse_backend_kind(*o.backend);
    if (o.embedder) cfg.embedder.kind = clears::parse_embedder_kind(*o.embedder);
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.corpus) cfg.corpus_path = *o.corpus;
    if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
    return cfg;
}

int adapt_exit(const clears::AdaptOutcome& a) {
    if (!a.failed_ids.empty()) return kExitBackend;
    if (a.succeeded == 0) return kExitNoSuccess;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompted Spanish text simplification: generation, extraction, linting and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--task", o.task, "pl or e2r");
    app.add_option("--variant", o.variant, "prompt variant, e.g. P7");
    app.add_option("--subset-n", o.subset_n, "number of documents sampled from the corpus");
    app.add_option("--seed", o.seed, "subset (and default few-shot) seed");
    app.add_option("--backend", o.backend, "http or mock")->check(CLI::IsMember({"http", "mock"}));
    app.add_option("--embedder", o.embedder, "stub or http")->check(CLI::IsMember({"stub", "http"}));
    app.add_option("--out-dir", o.out_dir, "output directory");
    app.add_option("--corpus", o.corpus, "corpus file (jsonl or csv)");
    app.add_option("--cache-dir", o.cache_dir, "response cache directory");

    auto* adapt = app.add_subcommand("adapt", "generate simplifications for the subset");

    std::string eval_input;
    auto* eval = app.add_subcommand("eval", "score an adapt output and write reports");
    eval->add_option("--input", eval_input, "adapt JSONL (default: <out-dir>/adapt.<variant>.jsonl)");

    std::vector<std::string> sweep_variants;
    auto* sweep = app.add_subcommand("sweep", "adapt + eval for several variants, merged report");
    sweep->add_option("--variants", sweep_variants, "variants in column order (default from config: P5 P6 P7)")
        ->delimiter(',');

    std::string lint_input;
    auto* lint = app.add_subcommand("lint", "run the compliance detectors over an adapt output");
    lint->add_option("--input", lint_input, "adapt JSONL (default: <out-dir>/adapt.<variant>.jsonl)");

    std::vector<std::string> report_rows;
    std::string report_format = "markdown";
    std::string report_output;
    auto* report = app.add_subcommand("report", "merge rows files into one comparison table");
    report->add_option("rows", report_rows, "rows.<variant>.jsonl files, one column each")->required();
    report->add_option("--format", report_format, "markdown or csv")->check(CLI::IsMember({"markdown", "md", "csv"}));
    report->add_option("--output", report_output, "write to file instead of standard output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitError;
    }

    try {
        if (*report) {
            const std::vector<clears::fs::path> paths(report_rows.begin(), report_rows.end());
            const auto body = clears::merge_rows_files(paths, clears::parse_report_format(report_format));
            if (report_output.empty()) std::cout << body;
            else clears::write_text_file(report_output, body);
            return 0;
        }

        clears::Pipeline pipeline(build_config(o));
        const auto& cfg = pipeline.config();

        if (*adapt) return adapt_exit(pipeline.adapt(cfg.variant));

        if (*eval) {
            const auto path = eval_input.empty() ? pipeline.adapt_path(cfg.variant) : clears::fs::path(eval_input);
            const auto rep = pipeline.eval(path, &std::cout);
            const auto it = rep.aggregates.find(clears::kFailureRate);
            return it != rep.aggregates.end() && it->second == 1.0 ? kExitNoSuccess : 0;
        }

        if (*sweep) {
            const auto variants = sweep_variants.empty() ? cfg.variants : sweep_variants;
            const auto out = pipeline.sweep(variants, &std::cout);
            std::cerr << "merged report -> " << out.compare_path.string() << "\n";
            if (!out.failed_variant.empty()) {
                std::cerr << "sweep stopped at " << out.failed_variant << ": " << out.error << "\n";
                return out.adapts.size() == out.reports.size() && !out.adapts.empty() &&
                               !out.adapts.back().failed_ids.empty()
                           ? kExitBackend
                           : kExitError;
            }
            return 0;
        }

        if (*lint) {
            const auto path = lint_input.empty() ? pipeline.adapt_path(cfg.variant) : clears::fs::path(lint_input);
            const auto out = pipeline.lint(path);
            for (const auto& [flag, n] : out.flag_counts) std::cout << flag << "\t" << n << "\n";
            std::cerr << "lint report -> " << out.path.string() << "\n";
            return 0;
        }
    } catch (const clears::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
