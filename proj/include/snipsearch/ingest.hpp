#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "snipsearch/common.hpp"
#include "snipsearch/jsonl.hpp"

namespace snipsearch {

enum class PostType { question, answer };

struct RawPost {
  PostId post_id = 0;
  PostType post_type = PostType::question;
  std::string title;  // questions only
  std::string body;   // HTML
  std::vector<std::string> tags;
  std::int64_t score = 0;
  std::optional<PostId> accepted_answer_id;
  std::optional<PostId> parent_id;

  bool has_tag(std::string_view tag) const;
};

enum class LinkType { linked, duplicate };

struct PostLink {
  PostId source_post_id = 0;
  PostId target_post_id = 0;
  LinkType link_type = LinkType::linked;
};

struct DuplicatePair {
  PostId master_id = 0;
  PostId duplicate_id = 0;
  Tokens master_title;
  Tokens duplicate_title;

  friend bool operator==(const DuplicatePair&, const DuplicatePair&) = default;
};

enum class SnippetRole { best, non_best, non_relevant };

std::string_view to_string(SnippetRole role);
SnippetRole role_from_string(std::string_view name);

struct QuestionSnippet {
  PostId snippet_id = 0;  // ordinal assigned at extraction, unique per corpus
  PostId question_id = 0;
  PostId answer_id = 0;
  Tokens title;
  Tokens code;
  SnippetRole role = SnippetRole::non_best;
  std::int64_t answer_score = 0;
  bool answer_accepted = false;

  friend bool operator==(const QuestionSnippet&, const QuestionSnippet&) = default;
};

// Rows that did not become records. `malformed_rows` holds 1-based row
// ordinals so a bad dump can be inspected.
struct SkipReport {
  std::size_t rows_read = 0;
  std::size_t malformed = 0;
  std::size_t other_type = 0;
  std::vector<std::size_t> malformed_rows;

  std::size_t skipped() const { return malformed + other_type; }
};

struct ParsedPosts {
  std::vector<RawPost> posts;
  SkipReport report;
};

struct ParsedLinks {
  std::vector<PostLink> links;
  SkipReport report;
};

/// Streams `<row .../>` elements from a dump table. Each callback receives the
/// decoded attribute map; returning false marks the row malformed. Throws
/// IngestError when the stream ends inside a row or before the root closes.
class XmlRowReader {
 public:
  using Attributes = std::map<std::string, std::string, std::less<>>;

  explicit XmlRowReader(std::istream& in) : in_(in) {}

  // Returns the number of rows seen. `on_row` is called for well-formed rows,
  // `on_malformed` with the row ordinal for the rest.
  std::size_t read(const std::function<void(std::size_t, const Attributes&)>& on_row,
                   const std::function<void(std::size_t)>& on_malformed);

 private:
  std::istream& in_;
};

/// Decodes XML/HTML character references (&lt; &#10; &#x41; ...). Unknown
/// named entities are kept verbatim.
std::string decode_entities(std::string_view text);

/// Parses the tag attribute in either `<a><b>` or `|a|b|` form.
std::vector<std::string> parse_tags(std::string_view tags);

/// Text content of every `<code>` element in an HTML body, entity-decoded.
std::vector<std::string> extract_code_blocks(std::string_view html);

ParsedPosts parse_posts(std::istream& dump);
ParsedLinks parse_post_links(std::istream& dump);

struct DuplicateExtraction {
  std::vector<DuplicatePair> pairs;
  std::size_t missing_endpoints = 0;
  std::size_t filtered = 0;  // wrong type, missing tag, empty title, self link
};

/// One pair per duplicate link whose endpoints are both tagged questions with
/// non-empty titles. Sorted by (master_id, duplicate_id).
DuplicateExtraction extract_duplicate_pairs(const std::vector<RawPost>& posts,
                                            const std::vector<PostLink>& links,
                                            std::string_view tag_filter);

inline constexpr std::size_t kMinCodeTokens = 5;
inline constexpr std::size_t kMaxCodeTokens = 512;

struct SnippetExtraction {
  std::vector<QuestionSnippet> snippets;
  std::size_t questions_seen = 0;
  std::size_t questions_not_how = 0;
  std::size_t questions_without_snippet = 0;
};

/// Mines question-code pairs from answers to tagged "how" questions. Each code
/// block of 5..512 normalized tokens is a snippet. The best answer is the
/// accepted one if it has a surviving block, else the highest score (lowest id
/// on ties); its first block is the question's single `best` snippet. Blocks of
/// other answers are `non_best`.
SnippetExtraction extract_question_snippets(const std::vector<RawPost>& posts,
                                            std::string_view tag_filter);

template <typename T>
struct CorpusSplits {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
  std::uint64_t seed = 0;
};

/// Seeded random split. Each split keeps the input's relative order.
template <typename T>
CorpusSplits<T> split_corpus(const std::vector<T>& items, std::uint64_t seed, std::size_t n_val,
                             std::size_t n_test) {
  if (items.size() <= n_val + n_test) {
    throw ConfigError("split_corpus: need more than " + std::to_string(n_val + n_test) +
                      " items, got " + std::to_string(items.size()));
  }
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> bucket(items.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) bucket[order[i]] = 1;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) bucket[order[i]] = 2;
  CorpusSplits<T> out;
  out.seed = seed;
  for (std::size_t i = 0; i < items.size(); ++i) {
    switch (bucket[i]) {
      case 0: out.train.push_back(items[i]); break;
      case 1: out.validation.push_back(items[i]); break;
      default: out.test.push_back(items[i]); break;
    }
  }
  return out;
}

struct OverlapStats {
  std::size_t len_master = 0;
  std::size_t len_duplicate = 0;
  std::size_t len_intersection = 0;
};

OverlapStats overlap_stats(const DuplicatePair& pair);

using Dictionary = std::unordered_set<std::string>;

Dictionary load_wordlist(const std::string& path);

/// Drops every token not found in `dictionary`, keeping order.
std::vector<Tokens> strip_domain_context(const std::vector<Tokens>& titles,
                                         const Dictionary& dictionary);

Json to_json(const DuplicatePair& pair);
DuplicatePair duplicate_pair_from_json(const Json& j);
Json to_json(const QuestionSnippet& snippet);
QuestionSnippet question_snippet_from_json(const Json& j);

std::vector<DuplicatePair> read_duplicate_pairs(const std::string& path);
void write_duplicate_pairs(const std::string& path, const std::vector<DuplicatePair>& pairs);
std::vector<QuestionSnippet> read_snippets(const std::string& path);
void write_snippets(const std::string& path, const std::vector<QuestionSnippet>& snippets);

}  // namespace snipsearch
