#include <sstream>

#include <gtest/gtest.h>

#include "clears/pipeline.hpp"
#include "support.hpp"

using namespace clears;
using testsupport::FakeTransport;
using testsupport::TempDir;

namespace {

RunConfig mock_config(const fs::path& out_dir, std::size_t n = 5) {
    RunConfig cfg;
    cfg.corpus_path = testsupport::test_data_dir() / "corpus_small.jsonl";
    cfg.mock_fixtures = testsupport::test_data_dir() / "mock_fixtures.json";
    cfg.subset_n = n;
    cfg.data_dir = testsupport::data_dir();
    cfg.out_dir = out_dir;
    return cfg;
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
        if (auto it = vars.find(k); it != vars.end()) return it->second;
        return std::nullopt;
    };
}

}  // namespace

TEST(Config, FileValuesAndRelativePaths) {
    TempDir dir("cfg");
    write_text_file(dir.path() / "c.json", R"({
        "corpus": {"path": "corpus.jsonl", "format": "jsonl"},
        "task": "E2R", "variant": "p6", "variants": ["P5", "p7"],
        "subset": {"n": 7, "seed": 9}, "shots_seed": 3,
        "backend": {"kind": "mock", "fixtures": "fx.json", "mock_mode": "degrade", "retries": 1,
                    "decode_params": {"temperature": 0.2}},
        "embedder": {"kind": "http", "url": "http://e:1", "bertscore": false},
        "thresholds": {"echo": 0.8}, "workers": 2, "out_dir": "/abs/out"
    })");
    const auto cfg = load_config(dir.path() / "c.json");
    EXPECT_EQ(cfg.corpus_path, dir.path() / "corpus.jsonl");
    EXPECT_EQ(cfg.mock_fixtures, dir.path() / "fx.json");
    EXPECT_EQ(cfg.task, Task::E2R);
    EXPECT_EQ(cfg.variant, "P6");
    EXPECT_EQ(cfg.variants, (std::vector<std::string>{"P5", "P7"}));
    EXPECT_EQ(cfg.subset_n, 7u);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.effective_shots_seed(), 3u);
    EXPECT_EQ(cfg.backend.effective_mock_mode(), MockMode::degrade);
    EXPECT_EQ(cfg.backend.retries, 1);
    EXPECT_EQ(cfg.decode_params.at("temperature"), 0.2);
    EXPECT_EQ(cfg.decode_params.at("n"), 1);
    EXPECT_EQ(cfg.embedder.kind, EmbedderKind::http);
    EXPECT_FALSE(cfg.embedder.bertscore);
    EXPECT_EQ(cfg.thresholds.echo, 0.8);
    EXPECT_EQ(cfg.out_dir, fs::path("/abs/out"));

    write_text_file(dir.path() / "bad.json", R"({"task": "XX"})");
    EXPECT_THROW(load_config(dir.path() / "bad.json"), Error);
    write_text_file(dir.path() / "bad2.json", R"({"seed": "many"})");
    EXPECT_THROW(load_config(dir.path() / "bad2.json"), Error);
}

TEST(Config, EnvironmentOverridesFile) {
    RunConfig cfg;
    apply_config_json(cfg, nlohmann::json::parse(R"({"seed": 1, "variant": "P5", "subset": {"n": 3}})"));
    apply_env(cfg, env_of({{"CLEARS_SEED", "77"}, {"CLEARS_VARIANT", "p7"}, {"CLEARS_BACKEND", "http"},
                           {"CLEARS_ENDPOINT_URL", "http://x"}}));
    EXPECT_EQ(cfg.seed, 77u);
    EXPECT_EQ(cfg.variant, "P7");
    EXPECT_EQ(cfg.subset_n, 3u);
    EXPECT_EQ(cfg.backend.kind, BackendKind::http);
    EXPECT_EQ(cfg.backend.endpoint_url, "http://x");
    EXPECT_THROW(apply_env(cfg, env_of({{"CLEARS_SUBSET_N", "12x"}})), Error);
}

TEST(Config, ValidationNamesTheProblem) {
    TempDir out("val");
    auto cfg = mock_config(out.path());
    cfg.corpus_path = "/nonexistent/c.jsonl";
    try {
        validate_config(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/c.jsonl"), std::string::npos);
    }
    cfg = mock_config(out.path());
    cfg.mock_fixtures.reset();
    EXPECT_THROW(validate_config(cfg), Error);
    cfg = mock_config(out.path());
    cfg.embedder.kind = EmbedderKind::http;
    EXPECT_THROW(validate_config(cfg), Error);
}

TEST(Pipeline, AdaptEvalLintOffline) {
    TempDir out("pipe");
    auto llm = std::make_shared<FakeTransport>();
    auto emb = std::make_shared<FakeTransport>();
    std::ostringstream log;
    Pipeline p(mock_config(out.path()), llm, emb, &log);
    ASSERT_EQ(p.subset().size(), 5u);

    const auto a = p.adapt("p6");
    EXPECT_EQ(a.records.size(), 5u);
    EXPECT_EQ(a.succeeded, 5u);
    EXPECT_TRUE(a.failed_ids.empty());
    for (const auto& r : a.records) {
        EXPECT_EQ(r.variant, "P6");
        EXPECT_EQ(r.example_ids.size(), 3u);
        EXPECT_EQ(r.extraction.status, ExtractStatus::repaired);
    }
    const auto loaded = load_adapt_records(a.path);
    ASSERT_EQ(loaded.size(), a.records.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].id, a.records[i].id);
        EXPECT_EQ(loaded[i].raw, a.records[i].raw);
        EXPECT_EQ(loaded[i].extraction, a.records[i].extraction);
    }

    const auto rep = p.eval(a.path);
    EXPECT_EQ(rep.variant_label, "P6");
    EXPECT_EQ(rep.run_metadata.at("prompt"), "P6-PL-ES");
    EXPECT_EQ(rep.run_metadata.at("backend"), "mock/fixtures");
    EXPECT_EQ(rep.run_metadata.at("subset_seed"), "42");
    for (const auto* f : {"report.P6.md", "report.P6.csv", "rows.P6.jsonl", "run.P6.json"})
        EXPECT_TRUE(fs::exists(out.path() / f)) << f;
    EXPECT_NO_THROW(merge_rows_files({out.path() / "rows.P6.jsonl"}, ReportFormat::markdown));

    const auto l = p.lint(a.path);
    EXPECT_TRUE(fs::exists(l.path));
    EXPECT_EQ(llm->posts + llm->gets + emb->posts + emb->gets, 0);
}

TEST(Pipeline, SweepIsDeterministic) {
    TempDir a("sweepa"), b("sweepb");
    auto run = [](const fs::path& dir) {
        Pipeline p(mock_config(dir), nullptr, nullptr, nullptr);
        return p.sweep({"P5", "P6", "P7"});
    };
    std::ostringstream sink;
    const auto ra = run(a.path());
    const auto rb = run(b.path());
    EXPECT_TRUE(ra.error.empty()) << ra.error;
    ASSERT_EQ(ra.reports.size(), 3u);
    for (const auto* f : {"report.compare.md", "report.compare.csv", "rows.P5.jsonl", "rows.P7.jsonl", "adapt.P6.jsonl"})
        EXPECT_EQ(text::read_file(a.path() / f), text::read_file(b.path() / f)) << f;
    const auto md = text::read_file(a.path() / "report.compare.md");
    EXPECT_NE(md.find("| Metric | Reference simple | P5 | P6 | P7 |"), std::string::npos);
    EXPECT_NE(md.find("Mean Fernández-Huerta score"), std::string::npos);
    EXPECT_NE(md.find("Mean combined sim."), std::string::npos);
    EXPECT_NEAR(ra.reports[0].aggregates.at("cs_vs_simple"), 1.0, 1e-12);
    EXPECT_LT(ra.reports[1].aggregates.at("cs_vs_simple"), 1.0);
}

TEST(Pipeline, SeedChangesSubset) {
    TempDir out("seed");
    auto c1 = mock_config(out.path());
    auto c2 = mock_config(out.path());
    c2.seed = 7;
    Pipeline p1(c1, nullptr, nullptr, nullptr), p2(c2, nullptr, nullptr, nullptr);
    EXPECT_NE(p1.subset(), p2.subset());
}

TEST(Pipeline, WarmCacheRerunMakesNoBackendCalls) {
    TempDir out("warm"), cache("warmcache");
    auto cfg = mock_config(out.path());
    cfg.cache_dir = cache.path();
    {
        Pipeline p(cfg, nullptr, nullptr, nullptr);
        EXPECT_EQ(p.adapt("P7").backend_calls, 5u);
    }
    cfg.mock_fixtures = testsupport::test_data_dir() / "eval5" / "fixtures.json";
    Pipeline p(cfg, nullptr, nullptr, nullptr);
    const auto a = p.adapt("P7");
    EXPECT_EQ(a.backend_calls, 0u);
    EXPECT_EQ(a.succeeded, 5u);
}

TEST(Pipeline, BackendFailuresAreRecorded) {
    TempDir out("fail");
    auto cfg = mock_config(out.path());
    cfg.mock_fixtures = testsupport::test_data_dir() / "eval5" / "fixtures.json";
    Pipeline p(cfg, nullptr, nullptr, nullptr);
    const auto a = p.adapt("P7");
    EXPECT_EQ(a.failed_ids.size(), 5u);
    EXPECT_EQ(a.succeeded, 0u);
    EXPECT_TRUE(fs::exists(a.path));
    const auto s = p.sweep({"P5", "P7"});
    EXPECT_EQ(s.failed_variant, "P5");
    EXPECT_EQ(s.reports.size(), 1u);
    EXPECT_EQ(s.reports[0].aggregates.at(kFailureRate), 1.0);
}

TEST(Pipeline, HttpEmbedderUsesTransport) {
    TempDir out("httpemb");
    auto cfg = mock_config(out.path(), 3);
    cfg.embedder.kind = EmbedderKind::http;
    cfg.embedder.url = "http://embed.invalid:9000";
    auto emb = testsupport::stub_service_transport();
    Pipeline p(cfg, nullptr, emb, nullptr);
    const auto rep = p.eval(p.adapt("P7").path);
    EXPECT_GT(emb->posts, 0);
    EXPECT_EQ(rep.run_metadata.at("embedder"), StubEmbedder::kModelId);

    TempDir out2("stubemb");
    Pipeline q(mock_config(out2.path(), 3), nullptr, nullptr, nullptr);
    const auto rep2 = q.eval(q.adapt("P7").path);
    EXPECT_EQ(report_to_jsonl(rep), report_to_jsonl(rep2));
}

TEST(Pipeline, EvalRejectsUnknownIds) {
    TempDir out("unk");
    Pipeline p(mock_config(out.path()), nullptr, nullptr, nullptr);
    AdaptRecord r;
    r.id = "zz";
    r.variant = "P7";
    write_text_file(out.path() / "adapt.bad.jsonl", to_json(r).dump() + "\n");
    try {
        p.eval(out.path() / "adapt.bad.jsonl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
    }
}

TEST(Merge, TamperedAggregatesRejected) {
    TempDir out("merge");
    Pipeline p(mock_config(out.path()), nullptr, nullptr, nullptr);
    p.sweep({"P5", "P7"});
    const auto path = out.path() / "rows.P5.jsonl";
    const auto merged = merge_rows_files({path, out.path() / "rows.P7.jsonl"}, ReportFormat::markdown);
    EXPECT_EQ(merged.substr(0, merged.find('\n')), "| Metric | Reference simple | P5 | P7 |");
    auto body = text::read_file(path);
    auto j = nlohmann::json::parse(body.substr(0, body.find('\n')));
    j["aggregates"]["fh"] = 1.0;
    write_text_file(path, j.dump() + body.substr(body.find('\n')));
    EXPECT_THROW(merge_rows_files({path}, ReportFormat::markdown), DataError);
}
