#include <gtest/gtest.h>

#include <filesystem>

#include "snipsearch/vocab.hpp"

using namespace snipsearch;

TEST(Vocabulary, ReservedIndices) {
  const Vocabulary v;
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.index("<pad>"), Vocabulary::kPad);
  EXPECT_EQ(v.token(Vocabulary::kEos), "<eos>");
  EXPECT_EQ(v.index("never-seen"), Vocabulary::kUnk);
}

TEST(Vocabulary, FrequencyOrderAndCutoff) {
  const std::vector<Tokens> corpus{{"b", "a", "c"}, {"a", "b", "d"}, {"a"}};
  const auto v = Vocabulary::build(corpus, 2);
  ASSERT_EQ(v.size(), 8u);
  EXPECT_EQ(v.token(6), "a");
  EXPECT_EQ(v.token(7), "b");
  EXPECT_FALSE(v.contains("c"));

  const auto capped = Vocabulary::build(corpus, 1, 7);
  EXPECT_EQ(capped.size(), 7u);
  EXPECT_EQ(capped.token(6), "a");
}

TEST(Vocabulary, EncodeDecode) {
  const auto v = Vocabulary::build({{"x", "y"}}, 1);
  const auto ids = v.encode({"x", "zzz", "y"});
  EXPECT_EQ(ids[1], Vocabulary::kUnk);
  EXPECT_EQ(v.decode({Vocabulary::kBos, v.index("x"), v.index("y"), Vocabulary::kEos, v.index("x")}),
            (Tokens{"x", "y"}));
}

TEST(Vocabulary, SaveLoad) {
  const auto path = (std::filesystem::temp_directory_path() / "snipsearch_vocab.txt").string();
  const auto v = Vocabulary::build({{"for", "in", "range", "for"}}, 1);
  v.save(path);
  const auto back = Vocabulary::load(path);
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back.token(static_cast<int>(i)), v.token(static_cast<int>(i)));
  std::filesystem::remove(path);
}
