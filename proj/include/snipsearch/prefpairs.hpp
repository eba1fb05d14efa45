#pragma once

#include <string>
#include <vector>

#include "snipsearch/ingest.hpp"

namespace snipsearch {

/// A question title paired with a code snippet. For non-relevant pairs the
/// snippet comes from `origin_question_id`, a different question.
struct QCPair {
  Tokens question_title;
  Tokens code;
  SnippetRole source_role = SnippetRole::non_best;
  PostId question_id = 0;
  PostId snippet_id = 0;
  PostId origin_question_id = 0;

  friend bool operator==(const QCPair&, const QCPair&) = default;
};

QCPair make_qc_pair(const QuestionSnippet& snippet);

/// label 1 when `first` is preferred (best > non_best > non_relevant), else 0.
struct PreferenceSample {
  QCPair first;
  QCPair second;
  int label = 0;

  friend bool operator==(const PreferenceSample&, const PreferenceSample&) = default;
};

/// Uniform draws over snippets whose question differs from a given one.
class NonRelevantSampler {
 public:
  explicit NonRelevantSampler(const std::vector<QuestionSnippet>& corpus);
  const QuestionSnippet& sample(PostId question_id, std::uint64_t seed) const;

 private:
  const std::vector<QuestionSnippet>& corpus_;
  std::vector<std::size_t> order_;  // corpus indices sorted by question id
};

/// One snippet drawn uniformly from other questions. Throws ConfigError when
/// the corpus holds fewer than two distinct questions.
QuestionSnippet sample_non_relevant(const std::vector<QuestionSnippet>& corpus, PostId question_id,
                                    std::uint64_t seed);

/// Applies the three preference rules per question with one sampled
/// non-relevant snippet; every comparison is emitted in both orders. The
/// non-relevant draw for a question uses mix_seed(seed, question_id), and the
/// final list is shuffled under `seed`.
std::vector<PreferenceSample> build_samples(const std::vector<QuestionSnippet>& corpus,
                                            std::uint64_t seed);

PreferenceSample swap(const PreferenceSample& sample);

Json to_json(const PreferenceSample& sample);
PreferenceSample preference_sample_from_json(const Json& j);
std::vector<PreferenceSample> read_samples(const std::string& path);
void write_samples(const std::string& path, const std::vector<PreferenceSample>& samples);

}  // namespace snipsearch
