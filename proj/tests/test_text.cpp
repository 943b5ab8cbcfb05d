#include <gtest/gtest.h>

#include "clears/text.hpp"

using namespace clears::text;

TEST(Text, NfcComposes) {
    EXPECT_EQ(nfc("e\xCC\x81"), "é");
    EXPECT_EQ(nfc("n\xCC\x83o"), "ño");
    EXPECT_EQ(nfc("ya compuesto: ñ"), "ya compuesto: ñ");
}

TEST(Text, LowercaseSpanish) {
    EXPECT_EQ(to_lower("ÁÉÍÓÚ ÑÜ Hola"), "áéíóú ñü hola");
}

TEST(Text, WordTokensSplitOnPunctuation) {
    const std::vector<std::string> expected{"Qué", "tal", "2", "000", "años", "n1"};
    EXPECT_EQ(word_tokens("¿Qué tal? 2.000 años... (n1)"), expected);
    EXPECT_TRUE(word_tokens(" ¡!... ").empty());
    EXPECT_EQ(normalized_tokens("El GATO"), (std::vector<std::string>{"el", "gato"}));
}

TEST(Text, CodepointsHandleMultibyte) {
    const auto cps = codepoints("añ😀");
    ASSERT_EQ(cps.size(), 3u);
    EXPECT_EQ(cps[1], 0xF1);
    EXPECT_EQ(cps[2], 0x1F600);
    std::string s;
    for (auto c : cps) append_utf8(s, c);
    EXPECT_EQ(s, "añ😀");
    EXPECT_EQ(codepoints("\xFF")[0], 0xFFFD);
}

TEST(Text, TrimAndLines) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_EQ(trim_trailing_newlines("x\r\n\n"), "x");
    EXPECT_EQ(split_lines("a\nb\n").size(), 3u);
    EXPECT_TRUE(starts_with_ci("Here is", "HERE"));
    EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
}

TEST(Text, KnownHashVectors) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
