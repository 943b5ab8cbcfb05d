#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "clears/embedder.hpp"
#include "clears/metrics.hpp"
#include "support.hpp"

using namespace clears;

namespace {

const BandTable& bands() {
    static const BandTable t = BandTable::load(testsupport::data_dir() / "metrics" / "bands.tsv");
    return t;
}

std::vector<EmbeddingVector> token_vectors(const nlohmann::json& rows) {
    std::vector<EmbeddingVector> out;
    for (const auto& r : rows) out.push_back(EmbeddingVector::normalized(r.get<std::vector<double>>(), Granularity::token));
    return out;
}

}  // namespace

TEST(Syllables, HandCountedSuite) {
    const std::vector<std::pair<std::string, std::size_t>> suite{
        {"ciudad", 2},   {"aire", 2},     {"día", 2},       {"poeta", 3},   {"estudiáis", 3},
        {"buey", 1},     {"queso", 2},    {"guitarra", 3},  {"pingüino", 3}, {"Uruguay", 3},
    };
    for (const auto& [w, n] : suite) EXPECT_EQ(count_syllables(w), n) << w;
}

TEST(Syllables, MoreCases) {
    EXPECT_EQ(count_syllables("país"), 2u);
    EXPECT_EQ(count_syllables("ley"), 1u);
    EXPECT_EQ(count_syllables("huevo"), 2u);
    EXPECT_EQ(count_syllables("GUERRA"), 2u);
    EXPECT_EQ(count_syllables("y"), 1u);
    EXPECT_EQ(count_syllables("2021"), 1u);
    EXPECT_EQ(count_syllables("leer"), 2u);
    EXPECT_EQ(count_syllables("caer"), 2u);
}

TEST(FernandezHuerta, WorkedExample) {
    const auto st = text_stats("El gato come pescado.");
    EXPECT_EQ(st.sentence_count, 1u);
    EXPECT_EQ(st.word_count, 4u);
    EXPECT_EQ(st.syllable_count, 8u);
    EXPECT_NEAR(fernandez_huerta(st), 82.76, 1e-9);
    EXPECT_NEAR(fernandez_huerta("El gato come pescado."), 82.76, 1e-9);
}

TEST(FernandezHuerta, FormulaAndErrors) {
    EXPECT_DOUBLE_EQ(fernandez_huerta(200.0, 10.0), 206.84 - 120.0 - 10.2);
    EXPECT_THROW(fernandez_huerta("¡...!"), Error);
}

TEST(Sentences, Boundaries) {
    EXPECT_EQ(count_sentences("Hola. ¿Qué tal? Bien…"), 3u);
    EXPECT_EQ(count_sentences("Dijo «basta.» Y se fue"), 2u);
    EXPECT_EQ(count_sentences("Línea uno\nLínea dos"), 2u);
    EXPECT_EQ(count_sentences("El 3.5 por ciento"), 1u);
    EXPECT_EQ(count_sentences("Sin punto final"), 1u);
    EXPECT_EQ(count_sentences("... !!"), 0u);
}

TEST(Bands, Labels) {
    EXPECT_EQ(readability_band(78.81, bands()), "somewhat easy");
    EXPECT_EQ(readability_band(80.0, bands()), "easy");
    EXPECT_EQ(readability_band(79.999, bands()), "somewhat easy");
    EXPECT_EQ(readability_band(100.0, bands()), "very easy");
    EXPECT_EQ(readability_band(130.0, bands()), "very easy");
    EXPECT_EQ(readability_band(-12.0, bands()), "very difficult");
    EXPECT_EQ(readability_band(45.0, bands()), "difficult");
}

TEST(Combined, MeanOfCosines) {
    auto two_dp = [](double v) { return std::round(v * 100.0) / 100.0; };
    EXPECT_DOUBLE_EQ(two_dp(combined_similarity(0.63, 0.77)), 0.70);
    EXPECT_DOUBLE_EQ(two_dp(combined_similarity(0.65, 0.77)), 0.71);
    EXPECT_DOUBLE_EQ(combined_similarity(0.2, 0.4), 0.30000000000000004);
}

TEST(Tfidf, MatchesBruteForceOracle) {
    const auto o = testsupport::load_json(testsupport::oracle_dir() / "tfidf_expected.json");
    const TfidfModel model(o["collection"].get<std::vector<std::string>>());
    for (const auto& p : o["pairs"]) {
        const auto a = p["a"].get<std::string>();
        const auto b = p["b"].get<std::string>();
        EXPECT_NEAR(model.cosine(a, b), p["cosine"].get<double>(), 1e-9) << a << " | " << b;
        EXPECT_DOUBLE_EQ(model.cosine(a, b), model.cosine(b, a));
    }
}

TEST(Tfidf, SelfOneDisjointZero) {
    const std::vector<std::string> coll{"El gato come.", "Un perro ladra.", "La casa es grande."};
    const TfidfModel model(coll);
    for (const auto& d : coll) EXPECT_EQ(model.cosine(d, d), 1.0);
    EXPECT_EQ(model.cosine("El gato come.", "Un perro ladra."), 0.0);
    EXPECT_EQ(model.cosine("palabra desconocida", "palabra desconocida"), 1.0);
    EXPECT_EQ(model.cosine("EL GATO come", "el gato COME."), 1.0);
    EXPECT_THROW(model.cosine("...", "El gato."), Error);
    EXPECT_NEAR(model.idf("gato"), std::log(4.0 / 2.0) + 1.0, 1e-12);
    EXPECT_NEAR(model.idf("nunca"), std::log(4.0) + 1.0, 1e-12);
}

TEST(Tfidf, RangeProperty) {
    std::mt19937_64 rng(3);
    std::vector<std::string> texts;
    while (texts.size() < 40) {
        auto t = testsupport::random_text(rng);
        if (!text::word_tokens(t).empty()) texts.push_back(t);
    }
    const TfidfModel model(texts);
    for (std::size_t i = 0; i + 1 < texts.size(); ++i) {
        const double c = model.cosine(texts[i], texts[i + 1]);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
    }
}

TEST(BertScore, ToyCaseMatchesOracle) {
    const auto o = testsupport::load_json(testsupport::oracle_dir() / "bertscore_expected.json");
    const auto cand = token_vectors(o["candidate"]);
    const auto ref = token_vectors(o["reference"]);
    const auto s = bertscore(cand, ref);
    EXPECT_NEAR(s.precision, o["precision"].get<double>(), 1e-9);
    EXPECT_NEAR(s.recall, o["recall"].get<double>(), 1e-9);
    EXPECT_NEAR(s.f1, o["f1"].get<double>(), 1e-9);
    EXPECT_NEAR(bertscore_f1(ref, cand), o["f1"].get<double>(), 1e-9);
}

TEST(BertScore, IdenticalTokenListsScoreOne) {
    const StubEmbedder stub;
    for (const std::string s : {"El gato come pescado.", "Uno", "a a a b", "¿Qué pasó el 3 de mayo?"}) {
        const auto t = stub.embed_token_list(s);
        EXPECT_NEAR(bertscore_f1(t.vectors, t.vectors), 1.0, 1e-9) << s;
    }
}

TEST(BertScore, PermutationInvariant) {
    const StubEmbedder stub;
    std::mt19937_64 rng(200);
    const std::vector<std::string> words{"gato", "perro", "casa", "ley", "vecinos", "piscina", "lunes", "ayuda", "niño", "río"};
    for (int trial = 0; trial < 200; ++trial) {
        auto pick = [&](std::size_t n) {
            std::vector<EmbeddingVector> v;
            for (std::size_t i = 0; i < n; ++i) v.push_back(stub.embed_token_list(words[rng() % words.size()]).vectors[0]);
            return v;
        };
        auto cand = pick(1 + rng() % 8);
        auto ref = pick(1 + rng() % 8);
        const auto base = bertscore(cand, ref);
        std::shuffle(cand.begin(), cand.end(), rng);
        std::shuffle(ref.begin(), ref.end(), rng);
        const auto perm = bertscore(cand, ref);
        EXPECT_NEAR(perm.precision, base.precision, 1e-12);
        EXPECT_NEAR(perm.recall, base.recall, 1e-12);
        EXPECT_NEAR(perm.f1, base.f1, 1e-12);
    }
}

TEST(BertScore, RejectsBadInput) {
    const StubEmbedder stub;
    const auto tok = stub.embed_token_list("gato").vectors;
    EXPECT_THROW(bertscore({}, tok), Error);
    const auto sent = stub.embed_sentence("gato");
    EXPECT_THROW(bertscore({sent}, tok), Error);
}

TEST(Embedding, VectorContracts) {
    EXPECT_THROW(EmbeddingVector::normalized({0.0, 0.0}, Granularity::sentence), Error);
    EXPECT_THROW(EmbeddingVector::unit({1.0, 1.0}, Granularity::sentence), DataError);
    const auto a = EmbeddingVector::normalized({3.0, 4.0}, Granularity::sentence);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(embedding_cosine(a, a), 1.0);
    const auto b = EmbeddingVector::normalized({-4.0, 3.0}, Granularity::sentence);
    EXPECT_NEAR(embedding_cosine(a, b), 0.0, 1e-12);
    EXPECT_THROW(embedding_cosine(a, EmbeddingVector::normalized({1.0, 0.0}, Granularity::token)), Error);
}
