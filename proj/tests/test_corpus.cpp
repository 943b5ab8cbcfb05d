#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "clears/corpus.hpp"
#include "support.hpp"

using namespace clears;
using testsupport::load_json;

namespace {

Document doc(std::string id, std::string src, std::optional<std::string> pl = std::nullopt,
             std::optional<std::string> e2r = std::nullopt) {
    return {std::move(id), std::move(src), std::move(pl), std::move(e2r)};
}

std::vector<Document> numbered(std::size_t n) {
    std::vector<Document> docs;
    char buf[16];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "doc%03zu", i);
        docs.push_back(doc(buf, "Texto " + std::to_string(i) + ".", "Ref " + std::to_string(i) + "."));
    }
    return docs;
}

}  // namespace

TEST(Jsonl, ParsesFieldsAndDropsEmptyReferences) {
    const auto docs = parse_corpus(
        "{\"id\":\"a\",\"source\":\"Uno.\",\"ref_pl\":\"Uno simple.\",\"ref_e2r\":\"\"}\n"
        "\n"
        "{\"id\":\"b\",\"source\":\"Dos.\\n\\n\"}\n",
        CorpusFormat::jsonl);
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(docs[0].ref_pl, "Uno simple.");
    EXPECT_FALSE(docs[0].ref_e2r);
    EXPECT_EQ(docs[1].source_text, "Dos.");
    EXPECT_FALSE(docs[1].reference(Task::PL));
}

TEST(Jsonl, AppliesNfc) {
    const auto docs = parse_corpus("{\"id\":\"a\",\"source\":\"cafe\\u0301\"}", CorpusFormat::jsonl);
    EXPECT_EQ(docs[0].source_text, "café");
}

TEST(Jsonl, ErrorsNameTheLine) {
    try {
        parse_corpus("{\"id\":\"a\",\"source\":\"x\"}\n{\"source\":\"y\"}\n", CorpusFormat::jsonl);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_corpus("{\"id\":\"a\",\"source\":\"\"}", CorpusFormat::jsonl), DataError);
    EXPECT_THROW(parse_corpus("{\"id\":7,\"source\":\"x\"}", CorpusFormat::jsonl), DataError);
    EXPECT_THROW(parse_corpus("not json", CorpusFormat::jsonl), DataError);
}

TEST(Corpus, DuplicateIdsRejected) {
    try {
        parse_corpus("{\"id\":\"a\",\"source\":\"x\"}\n{\"id\":\"a\",\"source\":\"y\"}\n", CorpusFormat::jsonl);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
    }
}

TEST(Csv, QuotedFieldsBomAndMultiline) {
    const std::string body =
        "\xEF\xBB\xBFid,source,ref_pl,ref_e2r\r\n"
        "a,\"Uno, dos\",\"Dice \"\"hola\"\"\",\r\n"
        "b,\"Línea 1\nLínea 2\",,Fácil.\r\n";
    const auto docs = parse_corpus(body, CorpusFormat::csv);
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(docs[0].source_text, "Uno, dos");
    EXPECT_EQ(docs[0].ref_pl, "Dice \"hola\"");
    EXPECT_FALSE(docs[0].ref_e2r);
    EXPECT_EQ(docs[1].source_text, "Línea 1\nLínea 2");
    EXPECT_FALSE(docs[1].ref_pl);
    EXPECT_EQ(docs[1].ref_e2r, "Fácil.");
}

TEST(Csv, BadHeaderAndShortRecordsRejected) {
    EXPECT_THROW(parse_corpus("id,text\na,b\n", CorpusFormat::csv), DataError);
    try {
        parse_corpus("id,source,ref_pl,ref_e2r\na,b,c,d\ne\n", CorpusFormat::csv);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("record"), std::string::npos) << e.what();
    }
}

TEST(Corpus, WriteParseRoundTripBothFormats) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Document> docs;
        for (int i = 0; i < 5; ++i) {
            auto src = std::string(text::trim(text::nfc(testsupport::random_text(rng))));
            if (src.empty()) src = "x";
            src = text::trim_trailing_newlines(src);
            if (text::trim(src).empty()) src = "x";
            std::optional<std::string> pl;
            if (trial % 2) pl = "ref " + std::to_string(i);
            docs.push_back(doc("id" + std::to_string(trial) + "_" + std::to_string(i), src, pl));
        }
        for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::csv}) {
            std::ostringstream out;
            write_corpus(out, docs, fmt);
            EXPECT_EQ(parse_corpus(out.str(), fmt), docs) << "trial " << trial;
        }
    }
}

TEST(Corpus, FormatFromExtension) {
    EXPECT_EQ(corpus_format_for("a/b.jsonl"), CorpusFormat::jsonl);
    EXPECT_EQ(corpus_format_for("a/b.csv"), CorpusFormat::csv);
    EXPECT_EQ(corpus_format_for("a/b.txt"), CorpusFormat::jsonl);
    EXPECT_THROW(parse_corpus_format("tsv"), Error);
}

TEST(Split, OverlapRejected) {
    EXPECT_THROW(make_split({doc("a", "x")}, {doc("a", "y")}), DataError);
    EXPECT_NO_THROW(make_split({doc("a", "x")}, {doc("b", "y")}));
}

TEST(Subset, MatchesIndependentOracle) {
    const auto expected = load_json(testsupport::oracle_dir() / "shuffle_expected.json");
    SeededRng rng(42);
    for (const auto& v : expected["first_raw_outputs_seed_42"]) EXPECT_EQ(rng.next(), v.get<uint64_t>());

    auto docs = numbered(300);
    std::shuffle(docs.begin(), docs.end(), std::mt19937(1));  // input order must not matter
    const auto sub = sample_subset(docs, 200, 42);
    std::vector<std::string> ids;
    for (const auto& d : sub) ids.push_back(d.id);
    EXPECT_EQ(ids, expected["ids"].get<std::vector<std::string>>());
}

TEST(Subset, DistinctDeterministicAndBounded) {
    const auto docs = numbered(50);
    for (uint64_t seed : {0ull, 1ull, 42ull, 0xFFFFFFFFFFFFFFFFull}) {
        const auto a = sample_subset(docs, 20, seed);
        const auto b = sample_subset(docs, 20, seed);
        EXPECT_EQ(a, b);
        std::set<std::string> ids;
        for (const auto& d : a) ids.insert(d.id);
        EXPECT_EQ(ids.size(), 20u);
    }
    EXPECT_NE(sample_subset(docs, 20, 1), sample_subset(docs, 20, 2));
    EXPECT_EQ(sample_subset(docs, 50, 3).size(), 50u);
    EXPECT_TRUE(sample_subset(docs, 0, 3).empty());
    EXPECT_THROW(sample_subset(docs, 51, 3), Error);
}

TEST(Rng, BelowIsInRangeAndCoversIt) {
    SeededRng rng(9);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 7u);
    EXPECT_THROW(rng.below(0), Error);
}

TEST(FewShot, CountsAndExclusion) {
    auto train = numbered(10);
    train.push_back(doc("noref", "Sin referencia."));
    EXPECT_TRUE(select_few_shot(train, 0, {}, 1, Task::PL).empty());
    EXPECT_EQ(select_few_shot(train, 1, {}, 1, Task::PL).size(), 1u);
    EXPECT_THROW(select_few_shot(train, 2, {}, 1, Task::PL), Error);

    std::set<std::string> exclude;
    for (int i = 0; i < 7; ++i) exclude.insert(train[i].id);
    for (uint64_t seed = 0; seed < 30; ++seed) {
        const auto ex = select_few_shot(train, 3, exclude, seed, Task::PL);
        ASSERT_EQ(ex.size(), 3u);
        std::set<std::string> ids;
        for (const auto& e : ex) {
            EXPECT_FALSE(exclude.contains(e.id));
            EXPECT_NE(e.id, "noref");
            ids.insert(e.id);
        }
        EXPECT_EQ(ids.size(), 3u);
        EXPECT_EQ(ex, select_few_shot(train, 3, exclude, seed, Task::PL));
    }
    exclude.insert(train[7].id);
    EXPECT_THROW(select_few_shot(train, 3, exclude, 1, Task::PL), Error);
    EXPECT_THROW(select_few_shot(train, 1, {}, 1, Task::E2R), Error);
}

TEST(FewShot, ExamplesCarryTaskReference) {
    const std::vector<Document> train{doc("a", "Complejo A.", "PL A.", "E2R A.")};
    const auto pl = select_few_shot(train, 1, {}, 5, Task::PL);
    const auto e2r = select_few_shot(train, 1, {}, 5, Task::E2R);
    EXPECT_EQ(pl[0].complex_text, "Complejo A.");
    EXPECT_EQ(pl[0].simple_text, "PL A.");
    EXPECT_EQ(e2r[0].simple_text, "E2R A.");
}
