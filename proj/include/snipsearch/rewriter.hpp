#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snipsearch/ingest.hpp"
#include "snipsearch/train_config.hpp"
#include "snipsearch/vocab.hpp"

namespace snipsearch {

/// Anything that maps a question to a fixed-width vector. Retrieval and
/// evaluation take this interface so that oracle embedders can stand in for a
/// trained model.
class QuestionEmbedder {
 public:
  virtual ~QuestionEmbedder() = default;
  virtual EmbeddingVector encode_question(const Tokens& question) const = 0;
  /// Up to n paraphrases of `question`, most likely first.
  virtual std::vector<Tokens> paraphrases(const Tokens& question, std::size_t n) const;
  virtual std::size_t dimension() const = 0;
};

/// Mean of encode_question over the query and its top-n paraphrases. With
/// n = 0 the result is exactly encode_question(query).
EmbeddingVector embed_query(const QuestionEmbedder& embedder, const Tokens& query, std::size_t n);

/// 1 - |a-b| / (|a| + |b|). Symmetric, in [0, 1]. Two zero vectors count as
/// identical (relevance 1). Throws on dimension mismatch.
double relevance(std::span<const float> a, std::span<const float> b);

struct Paraphrase {
  Tokens tokens;
  double score = 0.0;  // log-probability divided by generated length (EOS included)
};

struct ParaphraseSet {
  Tokens query;
  std::vector<Paraphrase> paraphrases;
};

/// Encoder-decoder transformer trained to rewrite a question into a duplicate.
class RewriterModel : public QuestionEmbedder {
 public:
  RewriterModel(Vocabulary vocab, ModelShape shape, int max_source_len, int max_target_len,
                std::uint64_t init_seed);
  ~RewriterModel() override;
  RewriterModel(RewriterModel&&) noexcept;
  RewriterModel& operator=(RewriterModel&&) noexcept;

  static RewriterModel load(const std::string& dir);
  /// Writes config.json, params.bin and vocab.txt.
  void save(const std::string& dir) const;

  EmbeddingVector encode_question(const Tokens& question) const override;
  std::vector<Tokens> paraphrases(const Tokens& question, std::size_t n) const override;
  std::size_t dimension() const override;

  /// Completed beams sorted by length-normalized log-probability, duplicates
  /// (exact token match) removed. Deterministic.
  std::vector<Paraphrase> beam_search(const Tokens& question, std::size_t beam_width) const;
  Tokens greedy_decode(const Tokens& question) const;

  /// beam_search filtered to drop empty outputs and copies of the query, then
  /// truncated to n. Requires n <= beam_width.
  ParaphraseSet generate_paraphrases(const Tokens& question, std::size_t n,
                                     std::size_t beam_width) const;

  /// P(y_i | y_<i, x) for the next position after `prefix`, over the vocabulary.
  std::vector<float> next_token_distribution(const Tokens& source, const Tokens& prefix) const;

  const Vocabulary& vocabulary() const;
  const ModelShape& shape() const;
  int max_source_len() const;
  int max_target_len() const;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Fits the model on master -> duplicate title pairs by minimizing the
/// negative log-likelihood of the duplicate under teacher forcing.
RewriterModel train_rewriter(const std::vector<DuplicatePair>& pairs, const TrainConfig& config,
                             TrainLog* log = nullptr);

/// Fraction of target tokens (EOS included) predicted correctly under teacher forcing.
double teacher_forced_accuracy(const RewriterModel& model, const std::vector<DuplicatePair>& pairs);

}  // namespace snipsearch
