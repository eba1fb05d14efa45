#include <gtest/gtest.h>

#include "snipsearch/text.hpp"

using namespace snipsearch;

TEST(TokenizeTitle, LowercasesAndSplits) {
  EXPECT_EQ(tokenize_title("Slicing URL with Python"), (Tokens{"slicing", "url", "with", "python"}));
  EXPECT_EQ(tokenize_title(""), Tokens{});
  EXPECT_EQ(tokenize_title("a//b"), (Tokens{"a", "b"}));
  EXPECT_EQ(tokenize_title("How to split a web address?"),
            (Tokens{"how", "to", "split", "a", "web", "address"}));
}

TEST(TokenizeTitle, KeepsUtf8InsideWords) {
  EXPECT_EQ(tokenize_title("caf\xc3\xa9 au lait"), (Tokens{"caf\xc3\xa9", "au", "lait"}));
}

TEST(SplitWordsAndPunct, PunctuationIsSeparate) {
  EXPECT_EQ(split_words_and_punct("f(x_1, y)"), (Tokens{"f", "(", "x_1", ",", "y", ")"}));
}

TEST(NormalizeCode, Numbers) {
  EXPECT_EQ(normalize_code("x = 42"), (Tokens{"x", "=", "NUMBER"}));
  EXPECT_EQ(normalize_code("y = 3.14e-2 + 0x1F + .5"),
            (Tokens{"y", "=", "NUMBER", "+", "NUMBER", "+", "NUMBER"}));
  EXPECT_EQ(normalize_code("a[10L]"), (Tokens{"a", "[", "NUMBER", "]"}));
}

TEST(NormalizeCode, IdentifiersWithDigitsStay) {
  EXPECT_EQ(normalize_code("x1 = md5(v2)"), (Tokens{"x1", "=", "md5", "(", "v2", ")"}));
}

TEST(NormalizeCode, Strings) {
  EXPECT_EQ(normalize_code("s = \"hello\""), (Tokens{"s", "=", "STRING"}));
  EXPECT_EQ(normalize_code("s = 'it\\'s'"), (Tokens{"s", "=", "STRING"}));
  EXPECT_EQ(normalize_code("d = \"\"\"two\nlines\"\"\""), (Tokens{"d", "=", "STRING"}));
  EXPECT_EQ(normalize_code("print(\"a\", 'b')"), (Tokens{"print", "(", "STRING", ",", "STRING", ")"}));
}

TEST(NormalizeCode, EmptyInput) { EXPECT_EQ(normalize_code(""), Tokens{}); }

TEST(NormalizeCode, UnmatchedQuoteDropped) {
  EXPECT_EQ(normalize_code("it's x"), (Tokens{"it", "s", "x"}));
}

TEST(NormalizeCode, IdempotentOverRandomText) {
  const std::string alphabet = "ab1 2.x\"'=()\n_9eE+-#";
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const auto len = rng.uniform(40);
    for (std::uint64_t i = 0; i < len; ++i) text += alphabet[rng.uniform(alphabet.size())];
    const Tokens once = normalize_code(text);
    const Tokens twice = normalize_code(join(once));
    ASSERT_EQ(once, twice) << "input: " << text;
    for (const auto& t : once) {
      ASSERT_EQ(t.find('"'), std::string::npos);
      ASSERT_EQ(t.find('\''), std::string::npos);
    }
  }
}

TEST(HowQuestion, FirstTokenOrBigram) {
  EXPECT_TRUE(is_how_question({"how", "do", "i", "sort"}));
  EXPECT_TRUE(is_how_question({"python", "how", "to", "sort"}));
  EXPECT_FALSE(is_how_question({"why", "is", "this", "slow"}));
  EXPECT_FALSE(is_how_question({"python", "how", "slow"}));
  EXPECT_FALSE(is_how_question({}));
}
