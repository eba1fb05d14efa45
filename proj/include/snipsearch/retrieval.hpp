#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "snipsearch/ingest.hpp"
#include "snipsearch/rewriter.hpp"

namespace snipsearch {

struct ScoredId {
  PostId id = 0;
  double score = 0.0;
};

/// Orders by descending score, then ascending id.
void sort_by_score(std::vector<ScoredId>& items);

/// TF-IDF cosine retriever over question titles.
/// idf(t) = ln(|D| / (1 + df(t))) + 1, tf = raw count.
class LexicalIndex {
 public:
  static LexicalIndex build(const std::map<PostId, Tokens>& titles);

  /// Every document with positive cosine similarity, best first.
  std::vector<ScoredId> score(const Tokens& query) const;
  std::vector<PostId> topk(const Tokens& query, std::size_t k) const;

  bool contains(PostId id) const { return titles_.contains(id); }
  const Tokens& title(PostId id) const;
  const std::map<PostId, Tokens>& titles() const { return titles_; }
  std::size_t size() const { return titles_.size(); }
  std::size_t vocabulary_size() const { return postings_.size(); }
  double idf(const std::string& token) const;
  /// Postings list of a token as (document id, term frequency); empty when unseen.
  std::vector<std::pair<PostId, int>> postings(const std::string& token) const;

  /// Writes manifest.json, documents.jsonl and postings.jsonl into `dir`.
  void save(const std::string& dir) const;
  static LexicalIndex load(const std::string& dir);

 private:
  struct Posting {
    std::size_t doc = 0;  // index into doc_ids_
    int tf = 0;
  };
  struct Term {
    double idf = 0.0;
    std::vector<Posting> postings;
  };

  void finalize();

  std::map<PostId, Tokens> titles_;
  std::vector<PostId> doc_ids_;
  std::vector<double> doc_norms_;
  std::unordered_map<std::string, Term> postings_;
};

std::vector<PostId> lexical_topk(const LexicalIndex& index, const Tokens& query, std::size_t k);

/// Precomputed title embeddings keyed by question id.
class EmbeddingStore {
 public:
  static EmbeddingStore build(const QuestionEmbedder& embedder,
                              const std::map<PostId, Tokens>& titles);

  void put(PostId id, EmbeddingVector v) { vectors_[id] = std::move(v); }
  const EmbeddingVector& at(PostId id) const;
  bool contains(PostId id) const { return vectors_.contains(id); }
  std::size_t size() const { return vectors_.size(); }

  /// JSONL of {id, vector}.
  void save(const std::string& path) const;
  static EmbeddingStore load(const std::string& path);

 private:
  std::map<PostId, EmbeddingVector> vectors_;
};

struct CandidatePool {
  PostId query_id = 0;
  std::vector<PostId> candidates;
  PostId master_id = 0;
  bool injected = false;
};

/// Lexical top-k for the duplicate title (the duplicate itself excluded); the
/// master is appended when the lexical stage missed it.
CandidatePool build_eval_pool(const DuplicatePair& test_pair, const LexicalIndex& index,
                              std::size_t k);

struct RankedQuestions {
  PostId query_id = 0;
  std::vector<ScoredId> ranked;
  std::optional<std::size_t> ground_truth_rank;  // 1-based
};

/// Scores each candidate by relevance(embed_query(query, n), title embedding).
RankedQuestions rank_pool(const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                          const CandidatePool& pool, const Tokens& query,
                          std::size_t n_paraphrases);

/// Same ranking with a precomputed query vector.
RankedQuestions rank_candidates(const EmbeddingVector& query_vector, const EmbeddingStore& titles,
                                const std::vector<PostId>& candidates, PostId query_id,
                                std::optional<PostId> ground_truth);

/// Production path: lexical recall of k_lexical titles, embedding re-rank, top k_final.
RankedQuestions retrieve(const Tokens& query, const LexicalIndex& index,
                         const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                         std::size_t k_lexical, std::size_t k_final, std::size_t n_paraphrases);

}  // namespace snipsearch
