#include "snipsearch/prefpairs.hpp"

#include <algorithm>
#include <map>

namespace snipsearch {

QCPair make_qc_pair(const QuestionSnippet& s) {
  return {s.title, s.code, s.role, s.question_id, s.snippet_id, s.question_id};
}

NonRelevantSampler::NonRelevantSampler(const std::vector<QuestionSnippet>& corpus)
    : corpus_(corpus), order_(corpus.size()) {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(corpus[a].question_id, corpus[a].snippet_id) <
           std::tie(corpus[b].question_id, corpus[b].snippet_id);
  });
  if (order_.empty() ||
      corpus[order_.front()].question_id == corpus[order_.back()].question_id) {
    throw ConfigError("non-relevant sampling needs at least two distinct questions");
  }
}

const QuestionSnippet& NonRelevantSampler::sample(PostId question_id, std::uint64_t seed) const {
  const auto lo = std::lower_bound(order_.begin(), order_.end(), question_id,
                                   [&](std::size_t i, PostId q) { return corpus_[i].question_id < q; });
  const auto hi = std::upper_bound(order_.begin(), order_.end(), question_id,
                                   [&](PostId q, std::size_t i) { return q < corpus_[i].question_id; });
  const auto own = static_cast<std::size_t>(hi - lo);
  const auto start = static_cast<std::size_t>(lo - order_.begin());
  Rng rng(seed);
  std::size_t pick = static_cast<std::size_t>(rng.uniform(order_.size() - own));
  if (pick >= start) pick += own;  // skip the question's own block
  return corpus_[order_[pick]];
}

QuestionSnippet sample_non_relevant(const std::vector<QuestionSnippet>& corpus, PostId question_id,
                                    std::uint64_t seed) {
  return NonRelevantSampler(corpus).sample(question_id, seed);
}

std::vector<PreferenceSample> build_samples(const std::vector<QuestionSnippet>& corpus,
                                            std::uint64_t seed) {
  std::map<PostId, std::vector<const QuestionSnippet*>> by_question;
  for (const auto& s : corpus) by_question[s.question_id].push_back(&s);
  NonRelevantSampler sampler(corpus);

  std::vector<PreferenceSample> out;
  for (auto& [qid, snippets] : by_question) {
    std::sort(snippets.begin(), snippets.end(),
              [](auto* a, auto* b) { return a->snippet_id < b->snippet_id; });
    const QuestionSnippet* best = nullptr;
    std::vector<const QuestionSnippet*> non_best;
    for (const auto* s : snippets) {
      if (s->role == SnippetRole::best && !best) {
        best = s;
      } else if (s->role == SnippetRole::non_best) {
        non_best.push_back(s);
      }
    }
    const QuestionSnippet& other = sampler.sample(qid, mix_seed(seed, static_cast<std::uint64_t>(qid)));
    QCPair nr{snippets.front()->title, other.code, SnippetRole::non_relevant,
              qid, other.snippet_id, other.question_id};

    auto emit = [&](const QCPair& preferred, const QCPair& worse) {
      out.push_back({preferred, worse, 1});
      out.push_back({worse, preferred, 0});
    };
    if (best) emit(make_qc_pair(*best), nr);
    for (const auto* nb : non_best) emit(make_qc_pair(*nb), nr);
    if (best) {
      for (const auto* nb : non_best) emit(make_qc_pair(*best), make_qc_pair(*nb));
    }
  }
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

PreferenceSample swap(const PreferenceSample& sample) {
  return {sample.second, sample.first, 1 - sample.label};
}

Json to_json(const PreferenceSample& s) {
  Json j;
  j["q_title"] = s.first.question_title;
  j["code_1"] = s.first.code;
  j["code_2"] = s.second.code;
  j["label"] = s.label;
  j["roles"] = {std::string(to_string(s.first.source_role)),
                std::string(to_string(s.second.source_role))};
  Json ids;
  ids["question_id"] = s.first.question_id;
  ids["snippet_1"] = s.first.snippet_id;
  ids["snippet_2"] = s.second.snippet_id;
  ids["origin_1"] = s.first.origin_question_id;
  ids["origin_2"] = s.second.origin_question_id;
  j["ids"] = std::move(ids);
  return j;
}

PreferenceSample preference_sample_from_json(const Json& j) {
  PreferenceSample s;
  const auto title = j.at("q_title").get<Tokens>();
  const Json& ids = j.at("ids");
  const Json& roles = j.at("roles");
  s.first = {title, j.at("code_1").get<Tokens>(), role_from_string(roles.at(0).get<std::string>()),
             ids.at("question_id").get<PostId>(), ids.at("snippet_1").get<PostId>(),
             ids.at("origin_1").get<PostId>()};
  s.second = {title, j.at("code_2").get<Tokens>(), role_from_string(roles.at(1).get<std::string>()),
              ids.at("question_id").get<PostId>(), ids.at("snippet_2").get<PostId>(),
              ids.at("origin_2").get<PostId>()};
  s.label = j.at("label").get<int>();
  if (s.label != 0 && s.label != 1) throw Error("preference label must be 0 or 1");
  return s;
}

std::vector<PreferenceSample> read_samples(const std::string& path) {
  return read_jsonl<PreferenceSample>(path, preference_sample_from_json);
}

void write_samples(const std::string& path, const std::vector<PreferenceSample>& samples) {
  write_jsonl<PreferenceSample>(path, samples, [](const PreferenceSample& s) { return to_json(s); });
}

}  // namespace snipsearch
