// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "snipsearch/service.hpp"
#include "snipsearch/text.hpp"
#include "toy.hpp"

#include <httplib.h>

using namespace snipsearch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, double budget_s, const std::function<Outcome()>& check) {
  const auto start = Clock::now();
  Outcome out;
  try {
    out = check();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = seconds_since(start);
  const bool in_budget = elapsed <= budget_s;
  const bool pass = out.pass && in_budget;
  if (!pass) ++failures;
  std::printf("%s %s: %s [%.1f s of %.0f s]%s\n", pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), elapsed,
              budget_s, in_budget ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
  Rng rng(20240601);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 1 + rng.uniform(10);
    const std::optional<std::size_t> rank =
        rng.uniform(8) == 0 ? std::nullopt : std::optional<std::size_t>(1 + rng.uniform(12));
    double p = 0.0;
    double d = 0.0;
    if (rank) {
      for (std::size_t pos = 1; pos <= k; ++pos) {
        if (pos == *rank) {
          p = 1.0;
          d = 1.0 / std::log2(1.0 + static_cast<double>(pos));
        }
      }
    }
    if (precision_at_k(rank, k) != p || dcg_at_k(rank, k) != d) ++mismatches;
  }
  return {mismatches == 0, fmt("%.0f mismatches over 10000 cases", static_cast<double>(mismatches))};
}

Outcome relevance_bounds() {
  Rng rng(7);
  double worst_asym = 0.0;
  std::size_t out_of_range = 0;
  for (std::size_t dim : {2u, 16u, 128u}) {
    for (int i = 0; i < 3334; ++i) {
      std::vector<float> a(dim), b(dim);
      const double sa = std::exp(2.0 * rng.normal());
      const double sb = std::exp(2.0 * rng.normal());
      for (std::size_t j = 0; j < dim; ++j) {
        a[j] = static_cast<float>(sa * rng.normal());
        b[j] = static_cast<float>(sb * rng.normal());
      }
      const double ab = relevance(a, b);
      const double ba = relevance(b, a);
      if (ab < 0.0 || ab > 1.0) ++out_of_range;
      worst_asym = std::max(worst_asym, std::abs(ab - ba));
    }
  }
  const std::vector<float> a{3.0f, 0.0f};
  const std::vector<float> b{0.0f, 4.0f};
  const double spot = relevance(a, b);
  const bool ok = out_of_range == 0 && worst_asym <= 1e-9 && std::abs(spot - 2.0 / 7.0) <= 1e-9;
  return {ok, fmt("out of range %.0f, max asymmetry %.1e, relevance((3,0),(0,4)) = %.12f", static_cast<double>(out_of_range),
                  worst_asym, spot)};
}

Outcome ingestion_fixture() {
  std::ifstream posts_in(toy::fixture("mini_posts.xml"));
  std::ifstream links_in(toy::fixture("mini_postlinks.xml"));
  const auto posts = parse_posts(posts_in);
  const auto links = parse_post_links(links_in);
  const auto dups = extract_duplicate_pairs(posts.posts, links.links, "python");
  const auto snips = extract_question_snippets(posts.posts, "python");

  const Tokens q1{"how", "to", "split", "a", "web", "address", "in", "python"};
  const Tokens q2{"how", "can", "i", "parse", "a", "url", "with", "python"};
  const std::vector<DuplicatePair> want_pairs{{1, 2, q1, q2}};
  const std::vector<QuestionSnippet> want_snippets{
      {1, 1, 3, q1,
       {"from", "urllib", ".", "parse", "import", "urlparse", "parts", "=", "urlparse", "(", "STRING", ")"},
       SnippetRole::best, 1, true},
      {2, 1, 4, q1,
       {"url", "=", "STRING", "host", "=", "url", ".", "split", "(", "STRING", ")", "[", "NUMBER", "]"},
       SnippetRole::non_best, 9, false},
      {3, 2, 5, q2,
       {"import", "urllib", ".", "parse", "as", "up", "print", "(", "up", ".", "urlsplit", "(", "u", ")", ".", "netloc",
        ")"},
       SnippetRole::best, 3, false},
  };
  const bool ok = posts.posts.size() == 5 && posts.report.other_type == 1 && posts.report.malformed == 0 &&
                  dups.pairs == want_pairs && dups.missing_endpoints == 1 && snips.snippets == want_snippets;
  return {ok, fmt("%.0f posts, %.0f duplicate pairs, %.0f snippets", static_cast<double>(posts.posts.size()),
                  static_cast<double>(dups.pairs.size()), static_cast<double>(snips.snippets.size()))};
}

Outcome preference_balance() {
  std::vector<std::vector<QuestionSnippet>> corpora;
  {
    std::ifstream posts_in(toy::fixture("mini_posts.xml"));
    corpora.push_back(extract_question_snippets(parse_posts(posts_in).posts, "python").snippets);
  }
  std::vector<QuestionSnippet> mixed;
  for (std::size_t nb = 0; nb < 4; ++nb) {
    const auto part = toy::planted_corpus(250, 30 + nb, static_cast<PostId>(10000 * (nb + 1)),
                                          static_cast<PostId>(100000 * (nb + 1)), 60, nb)
                          .snippets;
    mixed.insert(mixed.end(), part.begin(), part.end());
  }
  corpora.push_back(std::move(mixed));

  std::size_t total = 0;
  std::size_t missing_swaps = 0;
  std::size_t unbalanced = 0;
  for (const auto& corpus : corpora) {
    const auto samples = build_samples(corpus, 99);
    total += samples.size();
    std::map<std::tuple<PostId, PostId, PostId, int>, int> seen;
    std::map<PostId, long> balance;
    for (const auto& s : samples) {
      ++seen[{s.first.question_id, s.first.snippet_id, s.second.snippet_id, s.label}];
      balance[s.first.question_id] += s.label == 1 ? 1 : -1;
    }
    for (const auto& s : samples) {
      const auto it = seen.find({s.first.question_id, s.second.snippet_id, s.first.snippet_id, 1 - s.label});
      if (it == seen.end() || it->second != 1) ++missing_swaps;
    }
    for (const auto& [q, b] : balance) {
      if (b != 0) ++unbalanced;
    }
  }
  return {missing_swaps == 0 && unbalanced == 0 && total > 0,
          fmt("%.0f samples scanned, %.0f without a flipped swap, %.0f unbalanced questions", static_cast<double>(total),
              static_cast<double>(missing_swaps), static_cast<double>(unbalanced))};
}

Outcome memorization() {
  const auto pairs = toy::memorization_pairs();
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.min_frequency = 1;
  c.shape.d_model = 64;
  c.shape.encoder_layers = 2;
  c.shape.decoder_layers = 2;
  c.shape.heads = 4;
  c.shape.d_ff = 128;
  c.max_source_len = 16;
  c.max_target_len = 16;
  const auto model = train_rewriter(pairs, c);
  const double accuracy = teacher_forced_accuracy(model, pairs);
  std::size_t reproduced = 0;
  for (const auto& p : pairs) {
    const auto beams = model.beam_search(p.master_title, 1);
    if (!beams.empty() && beams[0].tokens == p.duplicate_title) ++reproduced;
  }
  const double rate = static_cast<double>(reproduced) / static_cast<double>(pairs.size());
  return {accuracy >= 0.95 && rate >= 0.90,
          fmt("teacher-forced accuracy %.4f (>= 0.95), beam-1 reproduction %.3f (>= 0.90)", accuracy, rate)};
}

// ---------------------------------------------------------------------------
// Planted-signal selector setup shared by separability, ablations and k-sweep.

constexpr std::size_t kPlantedPool = 100;
constexpr std::size_t kTrainQuestions = 4000;
constexpr std::size_t kTestQuestions = 300;

TrainConfig selector_config(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 8;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.min_frequency = 1;
  c.shape.d_model = 32;
  c.shape.encoder_layers = 3;
  c.shape.heads = 2;
  c.shape.d_ff = 64;
  c.max_input_len = 64;
  c.seed = seed;
  return c;
}

toy::PlantedCorpus train_corpus(std::uint64_t seed) {
  return toy::planted_corpus(kTrainQuestions, mix_seed(seed, 1), 1000, 1, kPlantedPool);
}

toy::PlantedCorpus test_corpus(std::uint64_t seed) {
  return toy::planted_corpus(kTestQuestions, mix_seed(seed, 2), 500000, 1000000, kPlantedPool);
}

std::map<std::pair<std::uint64_t, int>, std::unique_ptr<SelectorModel>> selector_cache;

const SelectorModel& selector_for(std::uint64_t seed, SelectorVariant variant) {
  const int key = static_cast<int>(variant.encoder) * 2 + static_cast<int>(variant.head);
  auto& slot = selector_cache[{seed, key}];
  if (!slot) {
    const auto samples = build_samples(train_corpus(seed).snippets, seed);
    slot = std::make_unique<SelectorModel>(train_selector(samples, selector_config(seed), variant));
  }
  return *slot;
}

bool non_relevant_overlaps(const PreferenceSample& s) {
  for (const QCPair* p : {&s.first, &s.second}) {
    if (p->source_role == SnippetRole::non_relevant && toy::shared_tokens(p->question_title, p->code) > 0) return true;
  }
  return false;
}

Outcome selector_separability() {
  const std::uint64_t seed = 1;
  const auto& model = selector_for(seed, {});
  const auto test = test_corpus(seed);
  std::vector<PreferenceSample> held;
  for (const auto& s : build_samples(test.snippets, 77)) {
    if (!non_relevant_overlaps(s)) held.push_back(s);
  }
  const double accuracy = pairwise_accuracy(model, held);

  const auto grouped = group_by_question(test.snippets);
  std::vector<PostId> questions;
  for (const auto& [q, s] : grouped) questions.push_back(q);
  Rng rng(5150);
  std::size_t hits = 0;
  std::size_t pools = 0;
  for (PostId q : questions) {
    const auto& own = grouped.at(q);
    const Tokens& title = own.front().title;
    std::vector<QCPair> candidates;
    for (const auto& s : own) candidates.push_back(make_qc_pair(s));
    std::size_t guard = 0;
    while (candidates.size() < 5 && guard++ < 10000) {
      const auto& other = grouped.at(questions[rng.uniform(questions.size())]);
      const auto& s = other[rng.uniform(other.size())];
      if (s.question_id == q || toy::shared_tokens(title, s.code) > 0) continue;
      const bool dup = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const QCPair& c) { return c.snippet_id == s.snippet_id; });
      if (dup) continue;
      candidates.push_back({title, s.code, SnippetRole::non_relevant, q, s.snippet_id, s.question_id});
    }
    if (candidates.size() != 5) continue;
    ++pools;
    const auto ranking = rank_snippets(model, title, candidates);
    if (ranking.ranked.front().snippet_id == own.front().snippet_id) ++hits;
  }
  const double p1 = pools ? static_cast<double>(hits) / static_cast<double>(pools) : 0.0;
  return {accuracy >= 0.95 && p1 >= 0.9 && pools == questions.size(),
          fmt("held-out pairwise accuracy %.4f over %.0f samples (>= 0.95), P@1 %.4f over %.0f pools of 5 (>= 0.9)", accuracy,
              static_cast<double>(held.size()), p1, static_cast<double>(pools))};
}

constexpr std::uint64_t kSeeds = 5;

struct SelectionSetup {
  toy::PlantedCorpus corpus;
  SnippetsByQuestion grouped;
  std::map<PostId, Tokens> titles;
  std::vector<PostId> questions;
  LexicalIndex index;
  toy::HashEmbedder embedder{32};
  EmbeddingStore store;

  explicit SelectionSetup(std::uint64_t seed) : corpus(test_corpus(seed)) {
    grouped = group_by_question(corpus.snippets);
    for (const auto& s : corpus.snippets) titles[s.question_id] = s.title;
    for (const auto& [q, t] : titles) questions.push_back(q);
    index = LexicalIndex::build(titles);
    store = EmbeddingStore::build(embedder, titles);
  }

  SelectionInputs inputs() const { return {questions, grouped, index, embedder, store}; }
};

EvalOptions selection_options(std::uint64_t seed, std::size_t k) {
  EvalOptions o;
  o.k = k;
  o.k_lexical = 20;
  o.n_paraphrases = 0;
  o.n_repeats = 5;
  o.seed = seed;
  return o;
}

std::map<std::string, std::vector<double>> ablation_p1;
std::vector<double> sweep_p1_k5;
std::vector<double> sweep_p1_k10;

Outcome ablation_directions() {
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto corpus = toy::paraphrase_corpus(seed, 20, 60);
    TrainConfig c;
    c.epochs = 10;
    c.batch_size = 16;
    c.min_frequency = 1;
    c.shape.d_model = 64;
    c.shape.encoder_layers = 2;
    c.shape.decoder_layers = 2;
    c.shape.heads = 4;
    c.shape.d_ff = 128;
    c.max_source_len = 16;
    c.max_target_len = 16;
    c.seed = seed;
    const auto rewriter = train_rewriter(corpus.train, c);
    const auto titles = toy::titles_of(corpus.test);
    const auto index = LexicalIndex::build(titles);
    const auto store = EmbeddingStore::build(rewriter, titles);
    EvalOptions o;
    o.seed = seed;
    const auto rq4 = run_rq4_drop_pq(corpus.test, index, rewriter, store, o);
    ablation_p1["drop_pq"].push_back(rq4.baseline.precision[0]);
    ablation_p1["full_rq4"].push_back(rq4.treatment.precision[0]);

    const SelectionSetup setup(seed);
    const auto& full = selector_for(seed, {});
    const auto& drop_pairwise = selector_for(seed, {EncoderKind::contextual, HeadKind::pointwise});
    const auto& drop_embedder = selector_for(seed, {EncoderKind::static_bag, HeadKind::pairwise});
    const auto reports = run_rq6_ablations(setup.inputs(),
                                           {{"full", scorer_for(full)},
                                            {"drop_pairwise", scorer_for(drop_pairwise)},
                                            {"drop_embedder", scorer_for(drop_embedder)}},
                                           selection_options(seed, 5));
    for (const auto& r : reports) ablation_p1[r.arm].push_back(r.precision[0]);
    const auto sweep = run_rq7_ksweep(setup.inputs(), scorer_for(full), {5, 10}, selection_options(seed, 5));
    sweep_p1_k5.push_back(sweep[0].precision[0]);
    sweep_p1_k10.push_back(sweep[1].precision[0]);
  }
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  const double full4 = mean(ablation_p1["full_rq4"]);
  const double pq = mean(ablation_p1["drop_pq"]);
  const double full6 = mean(ablation_p1["full"]);
  const double pw = mean(ablation_p1["drop_pairwise"]);
  const double emb = mean(ablation_p1["drop_embedder"]);
  const bool ok = full4 >= pq && full6 >= pw && full6 >= emb;
  std::ostringstream detail;
  detail << fmt("mean P@1 full %.4f vs drop_pq %.4f; full %.4f vs drop_pairwise %.4f", full4, pq, full6, pw)
         << fmt(" and drop_embedder %.4f over %.0f seeds", emb, static_cast<double>(kSeeds));
  return {ok, detail.str()};
}

Outcome k_sweep() {
  if (sweep_p1_k5.size() != kSeeds) return {false, "ablation run did not complete"};
  double k5 = 0.0, k10 = 0.0;
  for (std::size_t i = 0; i < kSeeds; ++i) {
    k5 += sweep_p1_k5[i] / kSeeds;
    k10 += sweep_p1_k10[i] / kSeeds;
  }
  return {k10 <= k5, fmt("mean P@1 at k=10 %.4f, at k=5 %.4f over %.0f seeds", k10, k5, static_cast<double>(kSeeds))};
}

// ---------------------------------------------------------------------------

// Runs every stage into `dir` with fixed seeds.
void pipeline_run(const std::string& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ifstream posts_in(toy::fixture("mini_posts.xml"));
  std::ifstream links_in(toy::fixture("mini_postlinks.xml"));
  const auto posts = parse_posts(posts_in);
  const auto links = parse_post_links(links_in);
  write_duplicate_pairs(dir + "/pairs.jsonl", extract_duplicate_pairs(posts.posts, links.links, "python").pairs);
  write_snippets(dir + "/snippets.jsonl", extract_question_snippets(posts.posts, "python").snippets);

  const auto planted = toy::planted_corpus(80, 3, 1000, 1, 60, 1).snippets;
  const auto samples = build_samples(planted, 21);
  write_samples(dir + "/samples.jsonl", samples);
  const auto split = split_corpus(samples, 21, 40, 40);
  write_samples(dir + "/samples.train.jsonl", split.train);

  auto pairs = toy::memorization_pairs();
  pairs.resize(40);
  TrainConfig rc;
  rc.epochs = 2;
  rc.min_frequency = 1;
  rc.shape.d_model = 16;
  rc.shape.encoder_layers = 1;
  rc.shape.decoder_layers = 1;
  rc.shape.heads = 2;
  rc.shape.d_ff = 32;
  const auto rewriter = train_rewriter(pairs, rc);
  rewriter.save(dir + "/rewriter");
  std::vector<ParaphraseSet> sets;
  for (std::size_t i = 0; i < 10; ++i) sets.push_back(rewriter.generate_paraphrases(pairs[i].master_title, 3, 5));
  write_jsonl<ParaphraseSet>(dir + "/paraphrases.jsonl", sets, [](const ParaphraseSet& s) {
    Json j;
    j["query"] = s.query;
    Json list = Json::array();
    for (const auto& p : s.paraphrases) list.push_back({{"tokens", p.tokens}, {"score", p.score}});
    j["paraphrases"] = std::move(list);
    return j;
  });
  const auto titles = toy::titles_of(pairs);
  const auto index = LexicalIndex::build(titles);
  index.save(dir + "/index");
  const auto store = EmbeddingStore::build(rewriter, titles);
  store.save(dir + "/embeddings.jsonl");

  TrainConfig sc = rc;
  sc.max_input_len = 64;
  const auto selector = train_selector(split.train, sc);
  selector.save(dir + "/selector");
  std::vector<SnippetRanking> rankings;
  const auto grouped = group_by_question(planted);
  for (const auto& [q, snippets] : grouped) {
    if (rankings.size() == 10) break;
    std::vector<QCPair> cands;
    for (const auto& s : snippets) cands.push_back(make_qc_pair(s));
    rankings.push_back(rank_snippets(selector, snippets.front().title, cands));
  }
  write_jsonl<SnippetRanking>(dir + "/rankings.jsonl", rankings,
                              [](const SnippetRanking& r) { return to_json(r); });

  EvalOptions o;
  o.n_paraphrases = 2;
  o.n_repeats = 3;
  std::vector<DuplicatePair> test(pairs.begin(), pairs.begin() + 20);
  const auto rq4 = run_rq4_drop_pq(test, index, rewriter, store, o);
  write_reports(dir + "/eval", {rq4.baseline, rq4.treatment});
  build_bundle(planted, dir + "/rewriter", dir + "/selector", dir + "/bundle");
}

std::vector<std::string> files_under(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto rel = fs::relative(e.path(), dir).string();
    // The bundle manifest carries a build timestamp.
    if (e.is_regular_file() && rel != "bundle/manifest.json") out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "snipsearch_acceptance_determinism";
  pipeline_run((root / "a").string());
  pipeline_run((root / "b").string());
  const auto a = files_under((root / "a").string());
  const auto b = files_under((root / "b").string());
  std::size_t differing = 0;
  std::string first_diff;
  if (a != b) return {false, "runs produced different file sets"};
  for (const auto& f : a) {
    if (read_file((root / "a" / f).string()) != read_file((root / "b" / f).string())) {
      if (differing++ == 0) first_diff = f;
    }
  }
  fs::remove_all(root);
  return {differing == 0 && !a.empty(), fmt("%.0f artifacts compared, %.0f differ", static_cast<double>(a.size()),
                                            static_cast<double>(differing)) +
                                            (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

Outcome service_latency() {
  const auto root = fs::temp_directory_path() / "snipsearch_acceptance_latency";
  fs::remove_all(root);
  const auto snippets = toy::planted_corpus(2500, 11, 1000, 1, kPlantedPool, 1).snippets;
  std::vector<Tokens> corpus;
  for (const auto& s : snippets) {
    corpus.push_back(s.title);
    corpus.push_back(s.code);
  }
  const auto vocab = Vocabulary::build(corpus, 1);
  // Default production shapes; weights do not change the cost.
  RewriterModel(vocab, ModelShape{}, 32, 32, 1).save((root / "rewriter").string());
  SelectorModel(vocab, ModelShape{}, {}, 512, 1).save((root / "selector").string());
  build_bundle(snippets, (root / "rewriter").string(), (root / "selector").string(), (root / "bundle").string());

  SearchService service;
  service.set_bundle(SearchBundle::load((root / "bundle").string()));
  httplib::Server server;
  service.register_routes(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);

  double worst = 0.0;
  double total = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const Json body{{"query", join(snippets[(i * 47) % snippets.size()].title)}};
    const auto start = Clock::now();
    const auto res = client.Post("/search", body.dump(), "application/json");
    const double t = seconds_since(start);
    if (res && res->status == 200 && !Json::parse(res->body)["results"].empty()) ++ok;
    worst = std::max(worst, t);
    total += t;
  }
  server.stop();
  listener.join();
  fs::remove_all(root);
  return {ok == 100 && worst < 1.0,
          fmt("%.0f/100 queries answered over %.0f snippets, mean %.3f s, max %.3f s (< 1 s)", static_cast<double>(ok),
              static_cast<double>(snippets.size()), total / 100.0, worst)};
}

}  // namespace

int main() {
  std::printf("Acceptance run (desk-scale toy corpora)\n");
  report("metric_oracle", 5, metric_oracle);
  report("relevance_bounds_symmetry", 5, relevance_bounds);
  report("ingestion_fixture_exactness", 5, ingestion_fixture);
  report("preference_antisymmetry_balance", 30, preference_balance);
  report("seq2seq_memorization", 600, memorization);
  report("selector_separability", 600, selector_separability);
  report("ablation_directions", 1800, ablation_directions);
  report("k_sweep_trend", 1, k_sweep);
  report("determinism", 600, determinism);
  report("service_latency", 600, service_latency);
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
