#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snipsearch/prefpairs.hpp"
#include "snipsearch/retrieval.hpp"
#include "snipsearch/train_config.hpp"
#include "snipsearch/vocab.hpp"

namespace snipsearch {

/// contextual: transformer over [CLS] title [SEP] code, first position pooled.
/// static_bag: mean of the token embeddings, no attention and no positions.
enum class EncoderKind { contextual, static_bag };
/// pairwise: MLP over the concatenation of two encodings, trained on
/// preference samples. pointwise: MLP over one encoding, trained as a
/// best-vs-rest classifier.
enum class HeadKind { pairwise, pointwise };

struct SelectorVariant {
  EncoderKind encoder = EncoderKind::contextual;
  HeadKind head = HeadKind::pairwise;

  Json to_json() const;
  static SelectorVariant from_json(const Json& j);
  friend bool operator==(const SelectorVariant&, const SelectorVariant&) = default;
};

struct RankedSnippet {
  PostId snippet_id = 0;
  PostId question_id = 0;
  double score = 0.0;
};

struct SnippetRanking {
  Tokens query;
  std::vector<RankedSnippet> ranked;
  std::optional<std::size_t> ground_truth_rank;  // 1-based

  /// Records the position of `snippet_id`, leaving it unset when absent.
  void mark_ground_truth(PostId snippet_id);
};

Json to_json(const SnippetRanking& ranking);

/// pref(i, j) is the probability that candidate i beats candidate j.
using PreferenceFn = std::function<double(std::size_t, std::size_t)>;

/// Round-robin sum: score_i = sum over j != i of pref(i, j).
std::vector<double> tournament_scores(std::size_t n, const PreferenceFn& pref);

/// Orders candidates by score descending, then snippet id ascending.
SnippetRanking order_candidates(const Tokens& query, const std::vector<QCPair>& candidates,
                                const std::vector<double>& scores);

/// Binary scorer over question-code pairs.
class SelectorModel {
 public:
  SelectorModel(Vocabulary vocab, ModelShape shape, SelectorVariant variant, int max_input_len,
                std::uint64_t init_seed);
  ~SelectorModel();
  SelectorModel(SelectorModel&&) noexcept;
  SelectorModel& operator=(SelectorModel&&) noexcept;

  static SelectorModel load(const std::string& dir);
  void save(const std::string& dir) const;

  /// D-dimensional representation of a question-code pair.
  EmbeddingVector encode_qc(const Tokens& title, const Tokens& code) const;

  /// Pairwise head: sigmoid of the MLP over both encodings. Pointwise head:
  /// sigmoid of the difference of the two single-pair logits.
  double preference_score(const QCPair& first, const QCPair& second) const;

  /// Pointwise head only: sigmoid of the single-pair logit.
  double pointwise_score(const QCPair& pair) const;

  /// Aggregate score per candidate. Pairwise models sum preference scores over
  /// all opponents; pointwise models use the single-pair probability.
  std::vector<double> candidate_scores(const std::vector<QCPair>& candidates) const;

  /// Token ids fed to the encoder: CLS, title, SEP, code, with code truncated
  /// from the tail to fit max_input_len.
  std::vector<int> input_ids(const Tokens& title, const Tokens& code) const;

  const Vocabulary& vocabulary() const;
  const ModelShape& shape() const;
  const SelectorVariant& variant() const;
  int max_input_len() const;
  std::size_t dimension() const;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Minimizes binary cross-entropy between the model output and the sample
/// labels. Only shape.d_model, shape.encoder_layers, shape.heads and
/// shape.d_ff are used. With config.freeze_encoder the encoder keeps its
/// initial weights and only the MLP is fit.
SelectorModel train_selector(const std::vector<PreferenceSample>& samples,
                             const TrainConfig& config, SelectorVariant variant = {},
                             TrainLog* log = nullptr,
                             const std::vector<PreferenceSample>* validation = nullptr);

/// Fraction of samples whose thresholded output agrees with the label. For
/// pointwise models the sample is judged by comparing the two single scores.
double pairwise_accuracy(const SelectorModel& model, const std::vector<PreferenceSample>& samples);

SnippetRanking rank_snippets(const SelectorModel& model, const Tokens& query,
                             const std::vector<QCPair>& candidates);

using SnippetsByQuestion = std::map<PostId, std::vector<QuestionSnippet>>;
SnippetsByQuestion group_by_question(const std::vector<QuestionSnippet>& snippets);

/// Every snippet of every ranked question, in ranked order, paired with the
/// query title.
std::vector<QCPair> gather_candidates(const RankedQuestions& ranked,
                                      const SnippetsByQuestion& snippets, const Tokens& query);

}  // namespace snipsearch
