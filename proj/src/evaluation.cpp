#include "snipsearch/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace snipsearch {

namespace fs = std::filesystem;

double precision_at_k(std::optional<std::size_t> rank, std::size_t k) {
  if (k == 0) throw ConfigError("precision_at_k: k must be at least 1");
  return rank && *rank >= 1 && *rank <= k ? 1.0 : 0.0;
}

double dcg_at_k(std::optional<std::size_t> rank, std::size_t k) {
  if (precision_at_k(rank, k) == 0.0) return 0.0;
  return 1.0 / std::log2(1.0 + static_cast<double>(*rank));
}

std::optional<std::size_t> tie_aware_rank(const std::vector<ScoredId>& scored, PostId target, Rng& rng) {
  const auto it = std::find_if(scored.begin(), scored.end(), [&](const ScoredId& s) { return s.id == target; });
  if (it == scored.end()) return std::nullopt;
  const double t = it->score;
  std::size_t higher = 0;
  std::size_t ties = 0;
  for (const auto& s : scored) {
    if (s.score > t) {
      ++higher;
    } else if (s.score == t) {
      ++ties;
    }
  }
  return 1 + higher + static_cast<std::size_t>(rng.uniform(ties));
}

Json to_json(const QueryRecord& r) {
  Json j;
  j["query_id"] = r.query_id;
  j["repeat"] = r.repeat;
  j["rank"] = r.rank ? Json(*r.rank) : Json(nullptr);
  j["pool_size"] = r.pool_size;
  return j;
}

QueryRecord query_record_from_json(const Json& j) {
  QueryRecord r;
  r.query_id = j.at("query_id").get<PostId>();
  r.repeat = j.at("repeat").get<std::size_t>();
  if (!j.at("rank").is_null()) r.rank = j.at("rank").get<std::size_t>();
  r.pool_size = j.at("pool_size").get<std::size_t>();
  return r;
}

Json MetricReport::to_json() const {
  Json j;
  j["protocol"] = protocol;
  j["arm"] = arm;
  j["queries"] = queries;
  j["excluded"] = excluded;
  j["n_repeats"] = n_repeats;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["parameters"] = parameters;
  Json metrics;
  for (std::size_t i = 0; i < kMaxReportedK; ++i) {
    const std::string k = std::to_string(i + 1);
    metrics["P@" + k] = {{"mean", precision[i]}, {"stddev", precision_stddev[i]}};
  }
  for (std::size_t i = 0; i < kMaxReportedK; ++i) {
    const std::string k = std::to_string(i + 1);
    metrics["DCG@" + k] = {{"mean", dcg[i]}, {"stddev", dcg_stddev[i]}};
  }
  j["metrics"] = std::move(metrics);
  return j;
}

namespace {

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

MetricReport summarize(std::string protocol, std::string arm, std::vector<QueryRecord> records,
                       std::size_t n_repeats) {
  MetricReport report;
  report.protocol = std::move(protocol);
  report.arm = std::move(arm);
  report.n_repeats = std::max<std::size_t>(n_repeats, 1);
  std::sort(records.begin(), records.end(), [](const QueryRecord& a, const QueryRecord& b) {
    return std::tie(a.repeat, a.query_id) < std::tie(b.repeat, b.query_id);
  });
  std::set<PostId> ids;
  for (const auto& r : records) ids.insert(r.query_id);
  report.queries = ids.size();

  for (std::size_t i = 0; i < kMaxReportedK; ++i) {
    const std::size_t k = i + 1;
    std::vector<double> p_sum(report.n_repeats, 0.0), d_sum(report.n_repeats, 0.0);
    std::vector<std::size_t> count(report.n_repeats, 0);
    double p_all = 0.0, d_all = 0.0;
    for (const auto& r : records) {
      if (r.repeat >= report.n_repeats) throw Error("summarize: record repeat out of range");
      const double p = precision_at_k(r.rank, k);
      const double d = dcg_at_k(r.rank, k);
      p_all += p;
      d_all += d;
      p_sum[r.repeat] += p;
      d_sum[r.repeat] += d;
      ++count[r.repeat];
    }
    if (!records.empty()) {
      report.precision[i] = p_all / static_cast<double>(records.size());
      report.dcg[i] = d_all / static_cast<double>(records.size());
    }
    std::vector<double> p_means, d_means;
    for (std::size_t r = 0; r < report.n_repeats; ++r) {
      if (count[r] == 0) continue;
      p_means.push_back(p_sum[r] / static_cast<double>(count[r]));
      d_means.push_back(d_sum[r] / static_cast<double>(count[r]));
    }
    report.precision_stddev[i] = sample_stddev(p_means);
    report.dcg_stddev[i] = sample_stddev(d_means);
  }
  report.records = std::move(records);
  return report;
}

Json EvalOptions::to_json() const {
  Json j;
  j["k"] = k;
  j["k_lexical"] = k_lexical;
  j["n_paraphrases"] = n_paraphrases;
  j["n_repeats"] = n_repeats;
  j["seed"] = seed;
  return j;
}

EvalOptions EvalOptions::from_json(const Json& j) {
  EvalOptions o;
  o.k = j.value("k", o.k);
  o.k_lexical = j.value("k_lexical", o.k_lexical);
  o.n_paraphrases = j.value("n_paraphrases", o.n_paraphrases);
  o.n_repeats = j.value("n_repeats", o.n_repeats);
  o.seed = j.value("seed", o.seed);
  if (o.k == 0) throw ConfigError("evaluation k must be at least 1");
  if (o.n_repeats == 0) throw ConfigError("evaluation n_repeats must be at least 1");
  return o;
}

std::string EvalOptions::hash() const { return hex64(fnv1a(to_json().dump())); }

namespace {

Rng repeat_rng(std::uint64_t seed, std::size_t repeat, PostId query_id) {
  return Rng(mix_seed(mix_seed(seed, repeat), static_cast<std::uint64_t>(query_id)));
}

MetricReport finish(MetricReport report, const EvalOptions& options) {
  report.seed = options.seed;
  report.config_hash = options.hash();
  return report;
}

MetricReport retrieval_report(const std::string& protocol, const std::string& arm,
                              const std::vector<DuplicatePair>& test_pairs, const LexicalIndex& index,
                              const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                              const EvalOptions& options, std::size_t n_paraphrases) {
  if (options.n_repeats == 0) throw ConfigError("evaluation n_repeats must be at least 1");
  std::vector<QueryRecord> records;
  for (const auto& pair : test_pairs) {
    const CandidatePool pool = build_eval_pool(pair, index, options.k);
    const EmbeddingVector qv = embed_query(embedder, pair.duplicate_title, n_paraphrases);
    const RankedQuestions ranked =
        rank_candidates(qv, titles, pool.candidates, pair.duplicate_id, pool.master_id);
    for (std::size_t r = 0; r < options.n_repeats; ++r) {
      Rng rng = repeat_rng(options.seed, r, pair.duplicate_id);
      records.push_back({pair.duplicate_id, r, tie_aware_rank(ranked.ranked, pool.master_id, rng),
                         pool.candidates.size()});
    }
  }
  MetricReport report = summarize(protocol, arm, std::move(records), options.n_repeats);
  report.parameters = options.to_json();
  report.parameters["n_paraphrases"] = n_paraphrases;
  return finish(std::move(report), options);
}

}  // namespace

MetricReport run_rq1(const std::vector<DuplicatePair>& test_pairs, const LexicalIndex& index,
                     const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                     const EvalOptions& options) {
  return retrieval_report("rq1", "full", test_pairs, index, embedder, titles, options,
                          options.n_paraphrases);
}

PairedReports run_rq4_drop_pq(const std::vector<DuplicatePair>& test_pairs, const LexicalIndex& index,
                              const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                              const EvalOptions& options) {
  return {retrieval_report("rq4", "drop_pq", test_pairs, index, embedder, titles, options, 0),
          retrieval_report("rq4", "full", test_pairs, index, embedder, titles, options,
                           options.n_paraphrases)};
}

PairedReports run_rq3_context(const std::vector<DuplicatePair>& train_pairs,
                              const std::vector<DuplicatePair>& test_pairs,
                              const Dictionary& dictionary, const TrainConfig& train_config,
                              const EvalOptions& options) {
  std::vector<DuplicatePair> stripped;
  for (const auto& p : train_pairs) {
    const auto reduced = strip_domain_context({p.master_title, p.duplicate_title}, dictionary);
    if (reduced[0].empty() || reduced[1].empty()) continue;
    DuplicatePair q = p;
    q.master_title = reduced[0];
    q.duplicate_title = reduced[1];
    stripped.push_back(std::move(q));
  }
  if (stripped.empty()) throw ConfigError("run_rq3_context: no training pair survives stripping");

  std::map<PostId, Tokens> test_titles;
  for (const auto& p : test_pairs) {
    test_titles[p.master_id] = p.master_title;
    test_titles[p.duplicate_id] = p.duplicate_title;
  }
  const LexicalIndex index = LexicalIndex::build(test_titles);

  const RewriterModel without = train_rewriter(stripped, train_config);
  const RewriterModel with = train_rewriter(train_pairs, train_config);
  MetricReport base = retrieval_report("rq3", "without_context", test_pairs, index, without,
                                       EmbeddingStore::build(without, test_titles), options,
                                       options.n_paraphrases);
  MetricReport treat = retrieval_report("rq3", "with_context", test_pairs, index, with,
                                        EmbeddingStore::build(with, test_titles), options,
                                        options.n_paraphrases);
  base.parameters["training_pairs"] = stripped.size();
  treat.parameters["training_pairs"] = train_pairs.size();
  return {std::move(base), std::move(treat)};
}

CandidateScorer scorer_for(const SelectorModel& model) {
  return [&model](const std::vector<QCPair>& candidates) { return model.candidate_scores(candidates); };
}

namespace {

struct StageOne {
  PostId question_id = 0;
  Tokens query;
  PostId ground_truth = 0;
  std::vector<ScoredId> ranked;
};

// Embedding-ranked recall list for each test question that has a best snippet.
std::vector<StageOne> stage_one(const SelectionInputs& in, std::size_t depth,
                                const EvalOptions& options, std::size_t& excluded) {
  std::vector<StageOne> out;
  excluded = 0;
  std::vector<PostId> questions = in.test_questions;
  std::sort(questions.begin(), questions.end());
  questions.erase(std::unique(questions.begin(), questions.end()), questions.end());
  for (PostId qid : questions) {
    const auto it = in.snippets.find(qid);
    const QuestionSnippet* best = nullptr;
    if (it != in.snippets.end()) {
      for (const auto& s : it->second) {
        if (s.role == SnippetRole::best) {
          best = &s;
          break;
        }
      }
    }
    if (!best) {
      ++excluded;
      continue;
    }
    StageOne s;
    s.question_id = qid;
    s.query = best->title;
    s.ground_truth = best->snippet_id;
    s.ranked = retrieve(s.query, in.index, in.embedder, in.titles, depth, depth,
                        options.n_paraphrases)
                   .ranked;
    out.push_back(std::move(s));
  }
  return out;
}

// Top k questions, the test question forced in place of the last one.
RankedQuestions top_questions(const StageOne& s, std::size_t k) {
  RankedQuestions rq;
  rq.query_id = s.question_id;
  for (const auto& r : s.ranked) {
    if (rq.ranked.size() == k) break;
    rq.ranked.push_back(r);
  }
  const bool present = std::any_of(rq.ranked.begin(), rq.ranked.end(),
                                   [&](const ScoredId& r) { return r.id == s.question_id; });
  if (!present) {
    if (rq.ranked.size() == k) rq.ranked.pop_back();
    rq.ranked.push_back({s.question_id, 0.0});
  }
  return rq;
}

std::vector<MetricReport> selection_reports(const std::string& protocol, const SelectionInputs& in,
                                            const std::vector<SelectorArm>& arms,
                                            const std::vector<std::size_t>& k_values,
                                            const EvalOptions& options) {
  if (k_values.empty()) throw ConfigError("no k values");
  if (options.n_repeats == 0) throw ConfigError("evaluation n_repeats must be at least 1");
  const std::size_t k_max = *std::max_element(k_values.begin(), k_values.end());
  if (*std::min_element(k_values.begin(), k_values.end()) == 0) throw ConfigError("k must be at least 1");
  std::size_t excluded = 0;
  const auto queries = stage_one(in, std::max(options.k_lexical, k_max), options, excluded);

  std::vector<MetricReport> reports;
  for (std::size_t k : k_values) {
    for (const auto& arm : arms) {
      std::vector<QueryRecord> records;
      for (const auto& q : queries) {
        const auto candidates = gather_candidates(top_questions(q, k), in.snippets, q.query);
        const auto scores = arm.scorer(candidates);
        if (scores.size() != candidates.size()) throw Error(arm.name + ": scorer returned wrong size");
        std::vector<ScoredId> scored;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          if (!std::isfinite(scores[i])) throw Error(arm.name + ": non-finite candidate score");
          scored.push_back({candidates[i].snippet_id, scores[i]});
        }
        for (std::size_t r = 0; r < options.n_repeats; ++r) {
          Rng rng = repeat_rng(options.seed, r, q.question_id);
          records.push_back({q.question_id, r, tie_aware_rank(scored, q.ground_truth, rng),
                             candidates.size()});
        }
      }
      MetricReport report = summarize(protocol, arm.name, std::move(records), options.n_repeats);
      report.excluded = excluded;
      report.parameters = options.to_json();
      report.parameters["k"] = k;
      reports.push_back(finish(std::move(report), options));
    }
  }
  return reports;
}

}  // namespace

MetricReport run_rq5(const SelectionInputs& inputs, const CandidateScorer& selector,
                     const EvalOptions& options) {
  return selection_reports("rq5", inputs, {{"full", selector}}, {options.k}, options).front();
}

std::vector<MetricReport> run_rq6_ablations(const SelectionInputs& inputs,
                                            const std::vector<SelectorArm>& arms,
                                            const EvalOptions& options) {
  return selection_reports("rq6", inputs, arms, {options.k}, options);
}

std::vector<MetricReport> run_rq7_ksweep(const SelectionInputs& inputs, const CandidateScorer& selector,
                                         const std::vector<std::size_t>& k_values,
                                         const EvalOptions& options) {
  return selection_reports("rq7", inputs, {{"full", selector}}, k_values, options);
}

void write_reports(const std::string& dir, const std::vector<MetricReport>& reports) {
  fs::create_directories(dir);
  Json all = Json::array();
  for (const auto& r : reports) all.push_back(r.to_json());
  write_json_file(dir + "/report.json", all);

  std::ofstream per_query(dir + "/per_query.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream csv(dir + "/metrics.csv", std::ios::binary | std::ios::trunc);
  if (!per_query || !csv) throw Error("cannot write reports into " + dir);
  csv << "protocol,arm,pool_k,K,precision,precision_stddev,dcg,dcg_stddev\n";
  for (const auto& r : reports) {
    for (const auto& rec : r.records) {
      Json j;
      j["protocol"] = r.protocol;
      j["arm"] = r.arm;
      const Json fields = to_json(rec);
      for (const auto& [key, value] : fields.items()) j[key] = value;
      per_query << j.dump() << '\n';
    }
    const std::size_t pool_k = r.parameters.value("k", std::size_t{0});
    for (std::size_t i = 0; i < kMaxReportedK; ++i) {
      csv << r.protocol << ',' << r.arm << ',' << pool_k << ',' << (i + 1) << ',' << r.precision[i]
          << ',' << r.precision_stddev[i] << ',' << r.dcg[i] << ',' << r.dcg_stddev[i] << '\n';
    }
  }
}

}  // namespace snipsearch
