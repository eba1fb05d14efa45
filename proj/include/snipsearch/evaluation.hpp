#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "snipsearch/retrieval.hpp"
#include "snipsearch/selector.hpp"

namespace snipsearch {

constexpr std::size_t kMaxReportedK = 5;

/// 1 when rank is known and rank <= k. Throws ConfigError when k == 0.
double precision_at_k(std::optional<std::size_t> rank, std::size_t k);
/// 1 / log2(1 + rank) when rank <= k, else 0.
double dcg_at_k(std::optional<std::size_t> rank, std::size_t k);

/// Rank of `target` among scored items. Items scoring strictly higher come
/// first; the target's place inside its tie group is drawn uniformly from
/// `rng`. Returns nullopt when the target is absent.
std::optional<std::size_t> tie_aware_rank(const std::vector<ScoredId>& scored, PostId target, Rng& rng);

struct QueryRecord {
  PostId query_id = 0;
  std::size_t repeat = 0;
  std::optional<std::size_t> rank;
  std::size_t pool_size = 0;
};

Json to_json(const QueryRecord& record);
QueryRecord query_record_from_json(const Json& j);

struct MetricReport {
  std::string protocol;
  std::string arm;
  std::vector<QueryRecord> records;
  // Index i holds the value for K = i + 1.
  std::array<double, kMaxReportedK> precision{};
  std::array<double, kMaxReportedK> dcg{};
  std::array<double, kMaxReportedK> precision_stddev{};
  std::array<double, kMaxReportedK> dcg_stddev{};
  std::size_t queries = 0;
  std::size_t excluded = 0;
  std::size_t n_repeats = 1;
  std::uint64_t seed = 0;
  std::string config_hash;
  Json parameters = Json::object();

  Json to_json() const;
};

/// Means over all records, and the sample standard deviation of the
/// per-repeat means.
MetricReport summarize(std::string protocol, std::string arm, std::vector<QueryRecord> records,
                       std::size_t n_repeats);

struct EvalOptions {
  std::size_t k = 4;             // lexical candidates per duplicate pool, or questions per query
  std::size_t k_lexical = 20;    // recall depth before the embedding re-rank
  std::size_t n_paraphrases = 5;
  std::size_t n_repeats = 5;
  std::uint64_t seed = 13;

  Json to_json() const;
  static EvalOptions from_json(const Json& j);
  /// FNV-1a over the canonical JSON form.
  std::string hash() const;
};

struct PairedReports {
  MetricReport baseline;
  MetricReport treatment;
};

/// Duplicate titles are the queries; the master is injected into each pool.
MetricReport run_rq1(const std::vector<DuplicatePair>& test_pairs, const LexicalIndex& index,
                     const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                     const EvalOptions& options);

/// baseline: no paraphrases; treatment: options.n_paraphrases. Same pools.
PairedReports run_rq4_drop_pq(const std::vector<DuplicatePair>& test_pairs, const LexicalIndex& index,
                              const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                              const EvalOptions& options);

/// Trains one rewriter on the original titles and one on titles reduced to
/// dictionary words, then runs the same retrieval protocol with both.
/// baseline: without context; treatment: with context.
PairedReports run_rq3_context(const std::vector<DuplicatePair>& train_pairs,
                              const std::vector<DuplicatePair>& test_pairs,
                              const Dictionary& dictionary, const TrainConfig& train_config,
                              const EvalOptions& options);

/// Scores for a list of candidates, higher is better.
using CandidateScorer = std::function<std::vector<double>(const std::vector<QCPair>&)>;
CandidateScorer scorer_for(const SelectorModel& model);

struct SelectorArm {
  std::string name;
  CandidateScorer scorer;
};

struct SelectionInputs {
  const std::vector<PostId>& test_questions;
  const SnippetsByQuestion& snippets;
  const LexicalIndex& index;
  const QuestionEmbedder& embedder;
  const EmbeddingStore& titles;
};

/// Stage one returns options.k questions with the test question itself forced
/// in; stage two ranks the gathered snippets and the question's best snippet
/// is the ground truth. Questions without a best snippet are excluded.
MetricReport run_rq5(const SelectionInputs& inputs, const CandidateScorer& selector,
                     const EvalOptions& options);

/// One report per arm, all on identical candidate pools.
std::vector<MetricReport> run_rq6_ablations(const SelectionInputs& inputs,
                                            const std::vector<SelectorArm>& arms,
                                            const EvalOptions& options);

/// One report per k; the stage-one ranking is shared across k.
std::vector<MetricReport> run_rq7_ksweep(const SelectionInputs& inputs, const CandidateScorer& selector,
                                         const std::vector<std::size_t>& k_values,
                                         const EvalOptions& options);

/// report.json, per_query.jsonl and metrics.csv in `dir`.
void write_reports(const std::string& dir, const std::vector<MetricReport>& reports);

}  // namespace snipsearch
