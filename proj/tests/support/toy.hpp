#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "snipsearch/evaluation.hpp"
#include "snipsearch/prefpairs.hpp"
#include "snipsearch/rewriter.hpp"
#include "snipsearch/selector.hpp"

#ifndef SNIPSEARCH_FIXTURE_DIR
#define SNIPSEARCH_FIXTURE_DIR "tests/fixtures"
#endif

namespace toy {

using snipsearch::EmbeddingVector;
using snipsearch::PostId;
using snipsearch::Tokens;

inline std::string fixture(const std::string& name) { return std::string(SNIPSEARCH_FIXTURE_DIR) + "/" + name; }

inline Tokens words(const std::string& text) {
  Tokens out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Mean of fixed pseudo-random token vectors; paraphrases come from a table.
class HashEmbedder : public snipsearch::QuestionEmbedder {
 public:
  explicit HashEmbedder(std::size_t dim = 16) : dim_(dim) {}

  EmbeddingVector token_vector(const std::string& token) const {
    snipsearch::Rng rng(snipsearch::fnv1a(token));
    EmbeddingVector v(dim_);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  }

  EmbeddingVector encode_question(const Tokens& q) const override {
    EmbeddingVector sum(dim_, 0.0f);
    for (const auto& t : q) {
      const auto v = token_vector(t);
      for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
    }
    if (!q.empty()) {
      for (auto& x : sum) x /= static_cast<float>(q.size());
    }
    return sum;
  }

  std::vector<Tokens> paraphrases(const Tokens& q, std::size_t n) const override {
    const auto it = table.find(q);
    if (it == table.end()) return {};
    std::vector<Tokens> out(it->second.begin(), it->second.begin() + std::min(n, it->second.size()));
    return out;
  }

  std::size_t dimension() const override { return dim_; }

  std::map<Tokens, std::vector<Tokens>> table;

 private:
  std::size_t dim_;
};

// Same vector for every question.
class ConstantEmbedder : public snipsearch::QuestionEmbedder {
 public:
  EmbeddingVector encode_question(const Tokens&) const override { return {1.0f, 2.0f, 3.0f}; }
  std::size_t dimension() const override { return 3; }
};

// One-hot vector per cluster; titles are assigned to clusters up front.
class ClusterEmbedder : public snipsearch::QuestionEmbedder {
 public:
  EmbeddingVector encode_question(const Tokens& q) const override {
    EmbeddingVector v(clusters, 0.0f);
    const auto it = cluster_of.find(q);
    if (it != cluster_of.end()) v[it->second] = 1.0f;
    return v;
  }
  std::size_t dimension() const override { return clusters; }

  std::map<Tokens, std::size_t> cluster_of;
  std::size_t clusters = 1;
};

// 200 distinct templated titles, each rewritten by a fixed rule.
inline std::vector<snipsearch::DuplicatePair> memorization_pairs() {
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"split", "divide"}, {"reverse", "invert"}, {"sort", "order"},   {"join", "concatenate"},
      {"copy", "clone"},   {"merge", "combine"},  {"filter", "select"}, {"count", "tally"},
      {"flatten", "unnest"}, {"parse", "read"}};
  const std::vector<std::string> objects{"list", "string", "dict", "tuple", "array",
                                         "file", "set",    "url",  "json",  "date"};
  const std::vector<std::string> langs{"python", "java"};
  std::vector<snipsearch::DuplicatePair> out;
  PostId id = 1;
  for (const auto& lang : langs) {
    for (const auto& [verb, syn] : verbs) {
      for (const auto& obj : objects) {
        snipsearch::DuplicatePair p;
        p.master_id = id++;
        p.duplicate_id = id++;
        p.master_title = {"how", "to", verb, "a", obj, "in", lang};
        p.duplicate_title = {"best", "way", "to", syn, obj, "using", lang};
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

struct PlantedCorpus {
  std::vector<snipsearch::QuestionSnippet> snippets;
  std::vector<std::string> pool;
};

// Titles are "how to" plus five content words. The best snippet repeats four
// of them, each non-best snippet two, around filler code tokens.
inline PlantedCorpus planted_corpus(std::size_t questions, std::uint64_t seed, PostId first_question = 1000,
                                    PostId first_snippet = 1, std::size_t pool_size = 60,
                                    std::size_t non_best = 1) {
  PlantedCorpus out;
  for (std::size_t i = 0; i < pool_size; ++i) out.pool.push_back("w" + std::to_string(i));
  const std::vector<std::string> filler{"(", ")", "=", ".", "x", "NUMBER", "STRING", "return", ":", "y"};
  snipsearch::Rng rng(seed);
  PostId sid = first_snippet;
  auto pick = [&](std::size_t n, const std::set<std::string>& avoid) {
    std::vector<std::string> chosen;
    while (chosen.size() < n) {
      const auto& w = out.pool[rng.uniform(out.pool.size())];
      if (!avoid.contains(w) && std::find(chosen.begin(), chosen.end(), w) == chosen.end()) chosen.push_back(w);
    }
    return chosen;
  };
  auto code_of = [&](std::vector<std::string> content) {
    for (int i = 0; i < 4; ++i) content.push_back(filler[rng.uniform(filler.size())]);
    rng.shuffle(content);
    return content;
  };
  for (std::size_t q = 0; q < questions; ++q) {
    const PostId qid = first_question + static_cast<PostId>(q);
    const auto content = pick(5, {});
    Tokens title{"how", "to"};
    title.insert(title.end(), content.begin(), content.end());
    const std::set<std::string> in_title(content.begin(), content.end());

    std::vector<std::string> shared = content;
    rng.shuffle(shared);
    shared.resize(4);
    snipsearch::QuestionSnippet best;
    best.snippet_id = sid++;
    best.question_id = qid;
    best.answer_id = qid * 10;
    best.title = title;
    best.code = code_of(shared);
    best.role = snipsearch::SnippetRole::best;
    best.answer_accepted = true;
    out.snippets.push_back(best);
    for (std::size_t nb = 0; nb < non_best; ++nb) {
      std::vector<std::string> c = content;
      rng.shuffle(c);
      c.resize(2);
      for (const auto& w : pick(2, in_title)) c.push_back(w);
      snipsearch::QuestionSnippet s = best;
      s.snippet_id = sid++;
      s.answer_id = qid * 10 + 1 + static_cast<PostId>(nb);
      s.code = code_of(c);
      s.role = snipsearch::SnippetRole::non_best;
      s.answer_accepted = false;
      out.snippets.push_back(s);
    }
  }
  return out;
}

struct ParaphraseCorpus {
  std::vector<snipsearch::DuplicatePair> train;
  std::vector<snipsearch::DuplicatePair> test;
};

// Intents are (action, object) pairs phrased through synonyms, so two titles
// of one intent may share nothing but "how to". Every ordered pair of distinct
// phrasings of an intent is a duplicate pair; `test_pairs` of them are held out.
inline ParaphraseCorpus paraphrase_corpus(std::uint64_t seed, std::size_t intents = 40,
                                          std::size_t test_pairs = 60) {
  const std::vector<std::vector<std::string>> actions{
      {"split", "divide", "separate"}, {"reverse", "invert", "flip"},     {"sort", "order", "rank"},
      {"join", "concatenate", "combine"}, {"copy", "clone", "duplicate"}, {"remove", "delete", "drop"},
      {"count", "tally", "enumerate"},  {"read", "load", "open"},          {"write", "save", "store"},
      {"find", "search", "locate"}};
  const std::vector<std::vector<std::string>> objects{
      {"string", "text", "str"},  {"list", "array", "sequence"}, {"dictionary", "dict", "map"},
      {"file", "document", "path"}, {"number", "integer", "int"}, {"date", "time", "timestamp"},
      {"url", "link", "address"},  {"column", "field", "attribute"}};
  snipsearch::Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t a = 0; a < actions.size(); ++a) {
    for (std::size_t o = 0; o < objects.size(); ++o) all.push_back({a, o});
  }
  rng.shuffle(all);
  all.resize(std::min(intents, all.size()));
  std::sort(all.begin(), all.end());

  std::vector<snipsearch::DuplicatePair> pairs;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto [a, o] = all[i];
    std::vector<Tokens> phrasings;
    for (const auto& verb : actions[a]) {
      for (const auto& obj : objects[o]) phrasings.push_back({"how", "to", verb, "a", obj});
    }
    const PostId base = static_cast<PostId>(100 * (i + 1));
    for (std::size_t m = 0; m < phrasings.size(); ++m) {
      for (std::size_t d = 0; d < phrasings.size(); ++d) {
        if (m == d) continue;
        pairs.push_back({base + static_cast<PostId>(m), base + static_cast<PostId>(d), phrasings[m], phrasings[d]});
      }
    }
  }
  rng.shuffle(pairs);
  ParaphraseCorpus out;
  out.test.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(std::min(test_pairs, pairs.size())));
  out.train.assign(pairs.begin() + static_cast<std::ptrdiff_t>(out.test.size()), pairs.end());
  auto by_key = [](const snipsearch::DuplicatePair& x, const snipsearch::DuplicatePair& y) {
    return std::tie(x.master_id, x.duplicate_id) < std::tie(y.master_id, y.duplicate_id);
  };
  std::sort(out.train.begin(), out.train.end(), by_key);
  std::sort(out.test.begin(), out.test.end(), by_key);
  return out;
}

inline std::map<PostId, Tokens> titles_of(const std::vector<snipsearch::DuplicatePair>& pairs) {
  std::map<PostId, Tokens> out;
  for (const auto& p : pairs) {
    out[p.master_id] = p.master_title;
    out[p.duplicate_id] = p.duplicate_title;
  }
  return out;
}

inline std::size_t shared_tokens(const Tokens& a, const Tokens& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  std::set<std::string> seen;
  for (const auto& t : b) {
    if (sa.contains(t)) seen.insert(t);
  }
  return seen.size();
}

}  // namespace toy
