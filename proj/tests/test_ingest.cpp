#include <gtest/gtest.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "snipsearch/ingest.hpp"
#include "toy.hpp"

using namespace snipsearch;

namespace {

ParsedPosts fixture_posts() {
  std::ifstream in(toy::fixture("mini_posts.xml"));
  return parse_posts(in);
}

ParsedLinks fixture_links() {
  std::ifstream in(toy::fixture("mini_postlinks.xml"));
  return parse_post_links(in);
}

}  // namespace

TEST(ParsePosts, MiniDumpFixture) {
  const auto parsed = fixture_posts();
  ASSERT_EQ(parsed.posts.size(), 5u);
  EXPECT_EQ(parsed.report.rows_read, 6u);
  EXPECT_EQ(parsed.report.other_type, 1u);
  EXPECT_EQ(parsed.report.malformed, 0u);
  EXPECT_EQ(parsed.report.skipped(), 1u);

  const RawPost& q1 = parsed.posts[0];
  EXPECT_EQ(q1.post_id, 1);
  EXPECT_EQ(q1.post_type, PostType::question);
  EXPECT_EQ(q1.title, "How to split a web address in Python?");
  EXPECT_EQ(q1.tags, (std::vector<std::string>{"python", "string"}));
  EXPECT_EQ(q1.accepted_answer_id, PostId{3});
  EXPECT_FALSE(q1.parent_id.has_value());
  EXPECT_EQ(q1.body, "<p>I have a URL and need the host.</p>");

  const RawPost& a4 = parsed.posts[3];
  EXPECT_EQ(a4.post_type, PostType::answer);
  EXPECT_EQ(a4.parent_id, PostId{1});
  EXPECT_EQ(a4.score, 9);
  EXPECT_TRUE(a4.title.empty());
}

TEST(ParsePosts, EmptyStream) {
  std::istringstream in("");
  const auto parsed = parse_posts(in);
  EXPECT_TRUE(parsed.posts.empty());
  EXPECT_EQ(parsed.report.rows_read, 0u);
}

TEST(ParsePosts, TagEntitiesDecoded) {
  std::istringstream in(
      "<posts>\n<row Id=\"7\" PostTypeId=\"1\" Title=\"t\" Body=\"\" Tags=\"&lt;python&gt;\" Score=\"0\" />\n</posts>\n");
  const auto parsed = parse_posts(in);
  ASSERT_EQ(parsed.posts.size(), 1u);
  EXPECT_EQ(parsed.posts[0].tags, std::vector<std::string>{"python"});
}

TEST(ParsePosts, PipeTagFormat) { EXPECT_EQ(parse_tags("|java|io|"), (std::vector<std::string>{"java", "io"})); }

TEST(ParsePosts, MalformedRowsCountedAndSkipped) {
  std::istringstream in(
      "<posts>\n"
      "<row Id=\"1\" PostTypeId=\"1\" Title=\"How to x\" Body=\"\" Tags=\"&lt;p&gt;\" />\n"
      "<row Id=\"2\" PostTypeId=\"2\" Body=\"no parent\" />\n"
      "<row Id=\"x3\" PostTypeId=\"1\" Title=\"bad id\" />\n"
      "<row Id=\"4\" PostTypeId=\"2\" ParentId=\"1\" Title=\"answers have no title\" Body=\"\" />\n"
      "<row Id=\"5\" PostTypeId=\"1\" Title=\"dup\" ParentId=\"1\" />\n"
      "<row Id=\"1\" PostTypeId=\"1\" Title=\"same id\" />\n"
      "</posts>\n");
  const auto parsed = parse_posts(in);
  EXPECT_EQ(parsed.posts.size(), 1u);
  EXPECT_EQ(parsed.report.malformed, 5u);
  EXPECT_EQ(parsed.report.malformed_rows, (std::vector<std::size_t>{2, 3, 4, 5, 6}));
}

TEST(ParsePosts, TruncatedStreamThrows) {
  std::istringstream row_cut("<posts>\n<row Id=\"1\" PostTypeId=\"1\" Title=\"How");
  EXPECT_THROW(parse_posts(row_cut), IngestError);
  std::istringstream root_cut("<posts>\n<row Id=\"1\" PostTypeId=\"1\" Title=\"How\" />\n");
  EXPECT_THROW(parse_posts(root_cut), IngestError);
}

TEST(ParsePostLinks, Fixture) {
  const auto parsed = fixture_links();
  ASSERT_EQ(parsed.links.size(), 3u);
  EXPECT_EQ(parsed.links[0].source_post_id, 2);
  EXPECT_EQ(parsed.links[0].target_post_id, 1);
  EXPECT_EQ(parsed.links[0].link_type, LinkType::duplicate);
  EXPECT_EQ(parsed.links[2].link_type, LinkType::linked);
}

TEST(DuplicatePairs, FixtureYieldsOnePair) {
  const auto posts = fixture_posts();
  const auto links = fixture_links();
  const auto ex = extract_duplicate_pairs(posts.posts, links.links, "python");
  ASSERT_EQ(ex.pairs.size(), 1u);
  EXPECT_EQ(ex.missing_endpoints, 1u);
  const DuplicatePair expected{1, 2, {"how", "to", "split", "a", "web", "address", "in", "python"},
                               {"how", "can", "i", "parse", "a", "url", "with", "python"}};
  EXPECT_EQ(ex.pairs[0], expected);
}

TEST(DuplicatePairs, TagFilterExcludes) {
  const auto posts = fixture_posts();
  const auto links = fixture_links();
  EXPECT_TRUE(extract_duplicate_pairs(posts.posts, links.links, "url").pairs.empty());
  EXPECT_TRUE(extract_duplicate_pairs(posts.posts, links.links, "java").pairs.empty());
}

TEST(DuplicatePairs, NoSelfPairsOrRepeatedKeys) {
  std::vector<RawPost> posts;
  for (PostId id = 1; id <= 4; ++id) {
    RawPost p;
    p.post_id = id;
    p.title = "How to do thing " + std::to_string(id);
    p.tags = {"python"};
    posts.push_back(p);
  }
  const std::vector<PostLink> links{{2, 1, LinkType::duplicate}, {3, 1, LinkType::duplicate},
                                    {2, 1, LinkType::duplicate}, {4, 4, LinkType::duplicate},
                                    {4, 2, LinkType::linked}};
  const auto ex = extract_duplicate_pairs(posts, links, "python");
  ASSERT_EQ(ex.pairs.size(), 2u);
  EXPECT_EQ(ex.pairs[0].master_id, 1);
  EXPECT_EQ(ex.pairs[0].duplicate_id, 2);
  EXPECT_EQ(ex.pairs[1].master_id, 1);
  EXPECT_EQ(ex.pairs[1].duplicate_id, 3);
}

TEST(QuestionSnippets, FixtureExact) {
  const auto posts = fixture_posts();
  const auto ex = extract_question_snippets(posts.posts, "python");
  EXPECT_EQ(ex.questions_seen, 2u);
  EXPECT_EQ(ex.questions_not_how, 0u);
  EXPECT_EQ(ex.questions_without_snippet, 0u);
  ASSERT_EQ(ex.snippets.size(), 3u);

  const Tokens q1{"how", "to", "split", "a", "web", "address", "in", "python"};
  const Tokens q2{"how", "can", "i", "parse", "a", "url", "with", "python"};
  const std::vector<QuestionSnippet> expected{
      {1, 1, 3, q1,
       {"from", "urllib", ".", "parse", "import", "urlparse", "parts", "=", "urlparse", "(", "STRING", ")"},
       SnippetRole::best, 1, true},
      {2, 1, 4, q1,
       {"url", "=", "STRING", "host", "=", "url", ".", "split", "(", "STRING", ")", "[", "NUMBER", "]"},
       SnippetRole::non_best, 9, false},
      {3, 2, 5, q2,
       {"import", "urllib", ".", "parse", "as", "up", "print", "(", "up", ".", "urlsplit", "(", "u", ")", ".",
        "netloc", ")"},
       SnippetRole::best, 3, false},
  };
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(ex.snippets[i], expected[i]) << "snippet " << i;
}

TEST(QuestionSnippets, AcceptanceBeatsScoreAndShortBlocksDrop) {
  RawPost q;
  q.post_id = 10;
  q.title = "How do I read a file";
  q.tags = {"python"};
  q.accepted_answer_id = 11;
  RawPost a;
  a.post_type = PostType::answer;
  a.parent_id = 10;
  a.post_id = 11;
  a.score = 1;
  a.body = "<code>with open(p) as f: data = f.read()</code>";
  RawPost b = a;
  b.post_id = 12;
  b.score = 9;
  b.body = "<code>f.read</code><code>lines = open(p).readlines()</code>";
  const auto ex = extract_question_snippets({q, a, b}, "python");
  ASSERT_EQ(ex.snippets.size(), 2u);
  EXPECT_EQ(ex.snippets[0].answer_id, 11);
  EXPECT_EQ(ex.snippets[0].role, SnippetRole::best);
  EXPECT_EQ(ex.snippets[1].answer_id, 12);
  EXPECT_EQ(ex.snippets[1].role, SnippetRole::non_best);
}

TEST(QuestionSnippets, ScoreTieGoesToLowestId) {
  RawPost q;
  q.post_id = 20;
  q.title = "How to sort a dict";
  q.tags = {"python"};
  RawPost a;
  a.post_type = PostType::answer;
  a.parent_id = 20;
  a.post_id = 22;
  a.score = 5;
  a.body = "<code>sorted(d.items())</code>";
  RawPost b = a;
  b.post_id = 21;
  b.body = "<code>dict(sorted(d.items()))</code>";
  const auto ex = extract_question_snippets({q, a, b}, "python");
  ASSERT_EQ(ex.snippets.size(), 2u);
  for (const auto& s : ex.snippets) {
    EXPECT_EQ(s.role == SnippetRole::best, s.answer_id == 21);
  }
}

TEST(QuestionSnippets, NonHowQuestionsSkipped) {
  RawPost q;
  q.post_id = 30;
  q.title = "Why is my loop slow";
  q.tags = {"python"};
  RawPost a;
  a.post_type = PostType::answer;
  a.parent_id = 30;
  a.post_id = 31;
  a.body = "<code>for i in range(10): print(i)</code>";
  const auto ex = extract_question_snippets({q, a}, "python");
  EXPECT_TRUE(ex.snippets.empty());
  EXPECT_EQ(ex.questions_not_how, 1u);
}

TEST(QuestionSnippets, InvariantsOnFixture) {
  const auto ex = extract_question_snippets(fixture_posts().posts, "python");
  std::map<PostId, int> best_count;
  for (const auto& s : ex.snippets) {
    EXPECT_GE(s.code.size(), kMinCodeTokens);
    EXPECT_LE(s.code.size(), kMaxCodeTokens);
    for (const auto& t : s.code) {
      EXPECT_FALSE(std::isdigit(static_cast<unsigned char>(t[0]))) << t;
      EXPECT_EQ(t.find('"'), std::string::npos);
    }
    if (s.role == SnippetRole::best) ++best_count[s.question_id];
  }
  for (const auto& [q, n] : best_count) EXPECT_EQ(n, 1) << q;
}

TEST(SplitCorpus, ExactSizesDisjointUnion) {
  std::vector<int> items(10);
  std::iota(items.begin(), items.end(), 0);
  const auto s = split_corpus(items, 7, 4, 4);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.validation.size(), 4u);
  EXPECT_EQ(s.test.size(), 4u);
  std::set<int> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 10u);
}

TEST(SplitCorpus, DeterministicAndSeedSensitive) {
  std::vector<int> items(100);
  std::iota(items.begin(), items.end(), 0);
  const auto a = split_corpus(items, 3, 10, 10);
  const auto b = split_corpus(items, 3, 10, 10);
  const auto c = split_corpus(items, 4, 10, 10);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.test, c.test);
}

TEST(SplitCorpus, InsufficientItems) {
  std::vector<int> items(8);
  EXPECT_THROW(split_corpus(items, 1, 4, 4), ConfigError);
}

TEST(OverlapStats, UniqueTokenIntersection) {
  const DuplicatePair same{1, 2, {"a", "b", "b"}, {"a", "b", "b"}};
  const auto s = overlap_stats(same);
  EXPECT_EQ(s.len_master, 3u);
  EXPECT_EQ(s.len_intersection, 2u);
  const DuplicatePair disjoint{1, 2, {"a"}, {"b", "c"}};
  EXPECT_EQ(overlap_stats(disjoint).len_intersection, 0u);
  EXPECT_EQ(overlap_stats(disjoint).len_duplicate, 2u);
}

TEST(StripDomainContext, KeepsDictionaryWords) {
  const Dictionary dict{"class", "dynamic", "attribute"};
  const auto out = strip_domain_context({{"python", "class", "dynamic", "attribute"}}, dict);
  EXPECT_EQ(out[0], (Tokens{"class", "dynamic", "attribute"}));
  const auto same = strip_domain_context({{"class", "attribute"}}, dict);
  EXPECT_EQ(same[0], (Tokens{"class", "attribute"}));
  EXPECT_THROW(strip_domain_context({{"a"}}, Dictionary{}), ConfigError);
}

TEST(Wordlist, LoadsLowercased) {
  const auto dict = load_wordlist(toy::fixture("wordlist.txt"));
  EXPECT_TRUE(dict.contains("split"));
  EXPECT_FALSE(dict.contains("python"));
}

TEST(Jsonl, RoundTripsKeepFieldOrder) {
  const auto dir = std::filesystem::temp_directory_path() / "snipsearch_ingest_jsonl";
  std::filesystem::create_directories(dir);
  const auto ex = extract_question_snippets(fixture_posts().posts, "python");
  write_snippets((dir / "s.jsonl").string(), ex.snippets);
  EXPECT_EQ(read_snippets((dir / "s.jsonl").string()), ex.snippets);
  const std::string first_line = read_file((dir / "s.jsonl").string()).substr(0, 40);
  EXPECT_EQ(first_line.rfind("{\"question_id\":1,\"answer_id\":3,", 0), 0u) << first_line;

  const std::vector<DuplicatePair> pairs{{1, 2, {"a"}, {"b"}}};
  write_duplicate_pairs((dir / "d.jsonl").string(), pairs);
  EXPECT_EQ(read_duplicate_pairs((dir / "d.jsonl").string()), pairs);
  EXPECT_EQ(read_file((dir / "d.jsonl").string()),
            "{\"master_id\":1,\"duplicate_id\":2,\"master_title\":[\"a\"],\"duplicate_title\":[\"b\"]}\n");
  std::filesystem::remove_all(dir);
}
