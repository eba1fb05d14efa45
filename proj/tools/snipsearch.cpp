// snipsearch command-line front end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "snipsearch/evaluation.hpp"
#include "snipsearch/ingest.hpp"
#include "snipsearch/jsonl.hpp"
#include "snipsearch/prefpairs.hpp"
#include "snipsearch/retrieval.hpp"
#include "snipsearch/rewriter.hpp"
#include "snipsearch/selector.hpp"
#include "snipsearch/service.hpp"
#include "snipsearch/text.hpp"

#include <CLI11.hpp>
#include <httplib.h>

using namespace snipsearch;
namespace fs = std::filesystem;

namespace {

// Titles files hold one {"id", "title"} record per line.
std::map<PostId, Tokens> read_titles(const std::string& path) {
  std::map<PostId, Tokens> out;
  const auto rows = read_jsonl<std::pair<PostId, Tokens>>(path, [](const Json& j) {
    return std::pair<PostId, Tokens>{j.at("id").get<PostId>(), j.at("title").get<Tokens>()};
  });
  for (const auto& [id, title] : rows) out[id] = title;
  return out;
}

void write_titles(const std::string& path, const std::map<PostId, Tokens>& titles) {
  std::vector<std::pair<PostId, Tokens>> rows(titles.begin(), titles.end());
  write_jsonl<std::pair<PostId, Tokens>>(
      path, rows, [](const std::pair<PostId, Tokens>& r) { return Json{{"id", r.first}, {"title", r.second}}; });
}

std::map<PostId, Tokens> snippet_titles(const std::vector<QuestionSnippet>& snippets) {
  std::map<PostId, Tokens> out;
  for (const auto& s : snippets) out[s.question_id] = s.title;
  return out;
}

TrainConfig train_config_from(const std::string& path) {
  return path.empty() ? TrainConfig{} : TrainConfig::from_json(read_json_file(path));
}

Json pool_json(const CandidatePool& pool) {
  return Json{{"query_id", pool.query_id},
              {"candidates", pool.candidates},
              {"master_id", pool.master_id},
              {"injected", pool.injected}};
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string posts;
  std::string postlinks;
  std::string tag = "python";
  std::string out;
  std::uint64_t seed = 13;
  std::size_t n_val = 2000;
  std::size_t n_test = 2000;
};

Json skip_json(const SkipReport& r) {
  return Json{{"rows_read", r.rows_read},
              {"malformed", r.malformed},
              {"other_type", r.other_type},
              {"malformed_rows", r.malformed_rows}};
}

void run_ingest(const IngestArgs& a) {
  std::ifstream posts_in(a.posts);
  if (!posts_in) throw IngestError("cannot open " + a.posts);
  std::ifstream links_in(a.postlinks);
  if (!links_in) throw IngestError("cannot open " + a.postlinks);
  const auto posts = parse_posts(posts_in);
  const auto links = parse_post_links(links_in);
  const auto dups = extract_duplicate_pairs(posts.posts, links.links, a.tag);
  const auto snips = extract_question_snippets(posts.posts, a.tag);

  fs::create_directories(a.out);
  write_duplicate_pairs(a.out + "/duplicates.jsonl", dups.pairs);
  write_snippets(a.out + "/snippets.jsonl", snips.snippets);
  auto titles = snippet_titles(snips.snippets);
  for (const auto& p : dups.pairs) {
    titles[p.master_id] = p.master_title;
    titles[p.duplicate_id] = p.duplicate_title;
  }
  write_titles(a.out + "/titles.jsonl", titles);

  Json splits{{"seed", a.seed}, {"n_val", a.n_val}, {"n_test", a.n_test}};
  if (!dups.pairs.empty()) {
    const auto s = split_corpus(dups.pairs, a.seed, a.n_val, a.n_test);
    write_duplicate_pairs(a.out + "/duplicates.train.jsonl", s.train);
    write_duplicate_pairs(a.out + "/duplicates.val.jsonl", s.validation);
    write_duplicate_pairs(a.out + "/duplicates.test.jsonl", s.test);
    splits["counts"] = {{"train", s.train.size()}, {"validation", s.validation.size()}, {"test", s.test.size()}};
  }
  write_json_file(a.out + "/splits.json", splits);

  std::size_t best = 0;
  for (const auto& s : snips.snippets) best += s.role == SnippetRole::best ? 1 : 0;
  const Json report{{"posts", skip_json(posts.report)},
                    {"postlinks", skip_json(links.report)},
                    {"duplicate_pairs", dups.pairs.size()},
                    {"missing_endpoints", dups.missing_endpoints},
                    {"filtered_links", dups.filtered},
                    {"snippets", snips.snippets.size()},
                    {"best", best},
                    {"non_best", snips.snippets.size() - best},
                    {"questions_seen", snips.questions_seen},
                    {"questions_not_how", snips.questions_not_how},
                    {"questions_without_snippet", snips.questions_without_snippet},
                    {"splits", splits}};
  write_json_file(a.out + "/ingest_report.json", report);
  print(report);
}

// --- rewriter ----------------------------------------------------------------

void rewriter_train(const std::string& pairs_path, const std::string& config_path, const std::string& out) {
  const auto pairs = read_duplicate_pairs(pairs_path);
  TrainLog log;
  const auto model = train_rewriter(pairs, train_config_from(config_path), &log);
  model.save(out);
  Json epochs = Json::array();
  for (const auto& e : log.epochs) epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  write_json_file(out + "/train_log.json", epochs);
  print(Json{{"pairs", pairs.size()}, {"vocabulary", model.vocabulary().size()}, {"epochs", epochs}});
}

void rewriter_paraphrase(const std::string& model_dir, const std::string& query, std::size_t n, std::size_t beam) {
  const auto model = RewriterModel::load(model_dir);
  const auto set = model.generate_paraphrases(tokenize_title(query), n, std::max(n, beam));
  Json list = Json::array();
  for (const auto& p : set.paraphrases) list.push_back({{"text", join(p.tokens)}, {"score", p.score}});
  print(Json{{"query", join(set.query)}, {"paraphrases", list}});
}

void rewriter_embed(const std::string& model_dir, const std::string& titles_path, const std::string& out) {
  const auto model = RewriterModel::load(model_dir);
  const auto store = EmbeddingStore::build(model, read_titles(titles_path));
  store.save(out);
  print(Json{{"embeddings", store.size()}, {"dimension", model.dimension()}});
}

// --- retrieve ----------------------------------------------------------------

void retrieve_build_index(const std::string& titles_path, const std::string& out) {
  const auto index = LexicalIndex::build(read_titles(titles_path));
  index.save(out);
  print(Json{{"documents", index.size()}, {"terms", index.vocabulary_size()}});
}

void retrieve_eval_pools(const std::string& pairs_path, const std::string& index_dir, std::size_t k,
                         const std::string& out) {
  const auto pairs = read_duplicate_pairs(pairs_path);
  const auto index = LexicalIndex::load(index_dir);
  std::vector<CandidatePool> pools;
  std::size_t injected = 0;
  for (const auto& p : pairs) {
    pools.push_back(build_eval_pool(p, index, k));
    injected += pools.back().injected ? 1 : 0;
  }
  write_jsonl<CandidatePool>(out, pools, pool_json);
  print(Json{{"pools", pools.size()}, {"injected", injected}});
}

void retrieve_query(const std::string& index_dir, const std::string& model_dir, const std::string& embeddings,
                    const std::string& text, std::size_t n, std::size_t k_final, std::size_t k_lexical) {
  const auto index = LexicalIndex::load(index_dir);
  const auto model = RewriterModel::load(model_dir);
  const auto store = embeddings.empty() ? EmbeddingStore::build(model, index.titles()) : EmbeddingStore::load(embeddings);
  const auto ranked = retrieve(tokenize_title(text), index, model, store, std::max(k_lexical, k_final), k_final, n);
  Json list = Json::array();
  for (const auto& s : ranked.ranked) {
    list.push_back({{"question_id", s.id}, {"title", join(index.title(s.id))}, {"score", s.score}});
  }
  print(Json{{"query", text}, {"ranked", list}});
}

// --- prefpairs ---------------------------------------------------------------

void prefpairs_build(const std::string& snippets_path, std::uint64_t seed, std::size_t n_val, std::size_t n_test,
                     const std::string& out) {
  const auto samples = build_samples(read_snippets(snippets_path), seed);
  fs::create_directories(out);
  write_samples(out + "/samples.jsonl", samples);
  const auto s = split_corpus(samples, seed, n_val, n_test);
  write_samples(out + "/samples.train.jsonl", s.train);
  write_samples(out + "/samples.val.jsonl", s.validation);
  write_samples(out + "/samples.test.jsonl", s.test);
  std::size_t positive = 0;
  for (const auto& x : samples) positive += x.label == 1 ? 1 : 0;
  const Json stats{{"samples", samples.size()},
                   {"positive", positive},
                   {"negative", samples.size() - positive},
                   {"seed", seed},
                   {"splits", {{"train", s.train.size()}, {"validation", s.validation.size()}, {"test", s.test.size()}}}};
  write_json_file(out + "/stats.json", stats);
  print(stats);
}

// --- selector ----------------------------------------------------------------

SelectorVariant parse_variant(const std::string& encoder, const std::string& head) {
  SelectorVariant v;
  if (encoder == "static_bag") {
    v.encoder = EncoderKind::static_bag;
  } else if (encoder != "contextual") {
    throw ConfigError("unknown encoder kind: " + encoder);
  }
  if (head == "pointwise") {
    v.head = HeadKind::pointwise;
  } else if (head != "pairwise") {
    throw ConfigError("unknown head kind: " + head);
  }
  return v;
}

void selector_train(const std::string& samples_dir, const std::string& config_path, bool freeze,
                    const SelectorVariant& variant, const std::string& out) {
  const auto train = read_samples(samples_dir + "/samples.train.jsonl");
  std::vector<PreferenceSample> val;
  if (fs::exists(samples_dir + "/samples.val.jsonl")) val = read_samples(samples_dir + "/samples.val.jsonl");
  TrainConfig config = train_config_from(config_path);
  config.freeze_encoder = config.freeze_encoder || freeze;
  TrainLog log;
  const auto model = train_selector(train, config, variant, &log, val.empty() ? nullptr : &val);
  model.save(out);
  Json epochs = Json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"accuracy", e.accuracy},
                      {"validation_accuracy", e.validation_accuracy}});
  }
  write_json_file(out + "/train_log.json", epochs);
  print(Json{{"samples", train.size()}, {"validation", val.size()}, {"epochs", epochs}});
}

void selector_rank(const std::string& model_dir, const std::string& query, const std::string& candidates_path,
                   std::optional<PostId> ground_truth, const std::string& out) {
  const auto model = SelectorModel::load(model_dir);
  const Tokens title = tokenize_title(query);
  std::vector<QCPair> candidates;
  for (const auto& s : read_snippets(candidates_path)) {
    QCPair p = make_qc_pair(s);
    p.question_title = title;
    candidates.push_back(std::move(p));
  }
  auto ranking = rank_snippets(model, title, candidates);
  if (ground_truth) ranking.mark_ground_truth(*ground_truth);
  write_json_file(out, to_json(ranking));
  print(to_json(ranking));
}

// --- eval --------------------------------------------------------------------

// Published figures from the full Stack Overflow Python corpus, shown for
// orientation only.
const std::map<std::string, std::string> kReference{
    {"rq1", "P@1 45.8 +/- 3.2 %"},
    {"rq3", "P@1 31.1 % without context, 45.8 % with context"},
    {"rq4", "P@1 36.9 % without paraphrases, 45.8 % with paraphrases"},
    {"rq5", "P@1 42.6 +/- 2.5 % (Python), 42.4 +/- 1.9 % (Java)"},
    {"rq6", "P@1 42.6 % full, 36.4 % drop_pairwise, 33.9 % drop_embedder"},
    {"rq7", "P@1 declines as more candidate questions are gathered"},
};

std::string path_in(const Json& cfg, const std::string& key, const fs::path& base) {
  if (!cfg.contains(key)) throw ConfigError("eval config is missing \"" + key + "\"");
  const fs::path p = cfg.at(key).get<std::string>();
  return (p.is_absolute() ? p : base / p).string();
}

struct QuestionStage {
  std::unique_ptr<LexicalIndex> index;
  std::unique_ptr<RewriterModel> rewriter;
  std::unique_ptr<EmbeddingStore> store;
};

QuestionStage load_question_stage(const Json& cfg, const fs::path& base, const std::map<PostId, Tokens>& titles) {
  QuestionStage s;
  s.index = std::make_unique<LexicalIndex>(cfg.contains("index") ? LexicalIndex::load(path_in(cfg, "index", base))
                                                                 : LexicalIndex::build(titles));
  s.rewriter = std::make_unique<RewriterModel>(RewriterModel::load(path_in(cfg, "rewriter", base)));
  s.store = std::make_unique<EmbeddingStore>(cfg.contains("embeddings")
                                                 ? EmbeddingStore::load(path_in(cfg, "embeddings", base))
                                                 : EmbeddingStore::build(*s.rewriter, s.index->titles()));
  return s;
}

std::vector<MetricReport> run_eval(const std::string& protocol, const Json& cfg, const fs::path& base) {
  const EvalOptions options = EvalOptions::from_json(cfg.value("options", Json::object()));
  if (protocol == "rq1" || protocol == "rq4") {
    const auto test = read_duplicate_pairs(path_in(cfg, "test_pairs", base));
    std::map<PostId, Tokens> titles;
    for (const auto& p : test) {
      titles[p.master_id] = p.master_title;
      titles[p.duplicate_id] = p.duplicate_title;
    }
    const auto stage = load_question_stage(cfg, base, titles);
    if (protocol == "rq1") return {run_rq1(test, *stage.index, *stage.rewriter, *stage.store, options)};
    const auto paired = run_rq4_drop_pq(test, *stage.index, *stage.rewriter, *stage.store, options);
    return {paired.baseline, paired.treatment};
  }
  if (protocol == "rq3") {
    const auto paired = run_rq3_context(read_duplicate_pairs(path_in(cfg, "train_pairs", base)),
                                        read_duplicate_pairs(path_in(cfg, "test_pairs", base)),
                                        load_wordlist(path_in(cfg, "dictionary", base)),
                                        TrainConfig::from_json(cfg.value("train", Json::object())), options);
    return {paired.baseline, paired.treatment};
  }
  if (protocol != "rq5" && protocol != "rq6" && protocol != "rq7") throw ConfigError("unknown protocol " + protocol);

  const auto snippets = read_snippets(path_in(cfg, "snippets", base));
  const auto grouped = group_by_question(snippets);
  const auto stage = load_question_stage(cfg, base, snippet_titles(snippets));
  std::vector<PostId> questions;
  for (const auto& [q, list] : grouped) questions.push_back(q);
  const SelectionInputs inputs{questions, grouped, *stage.index, *stage.rewriter, *stage.store};

  if (protocol == "rq6") {
    std::vector<std::unique_ptr<SelectorModel>> models;
    std::vector<SelectorArm> arms;
    if (!cfg.contains("arms")) throw ConfigError("eval config is missing \"arms\"");
    for (const auto& [name, dir] : cfg.at("arms").items()) {
      const fs::path p = dir.get<std::string>();
      models.push_back(std::make_unique<SelectorModel>(SelectorModel::load((p.is_absolute() ? p : base / p).string())));
      arms.push_back({name, scorer_for(*models.back())});
    }
    return run_rq6_ablations(inputs, arms, options);
  }
  const auto selector = SelectorModel::load(path_in(cfg, "selector", base));
  if (protocol == "rq5") return {run_rq5(inputs, scorer_for(selector), options)};
  const auto k_values = cfg.value("k_values", std::vector<std::size_t>{5, 10});
  return run_rq7_ksweep(inputs, scorer_for(selector), k_values, options);
}

void eval_command(const std::string& protocol, const std::string& config_path, const std::string& out) {
  const Json cfg = read_json_file(config_path);
  const auto reports = run_eval(protocol, cfg, fs::path(config_path).parent_path());
  write_reports(out, reports);
  std::cout << protocol << " desk-scale results\n";
  for (const auto& r : reports) {
    std::cout << "  " << r.arm;
    if (r.parameters.contains("k")) std::cout << " k=" << r.parameters.at("k").get<std::size_t>();
    std::cout << ": queries " << r.queries << ", excluded " << r.excluded;
    for (std::size_t k = 0; k < kMaxReportedK; ++k) {
      std::cout << ", P@" << k + 1 << " " << r.precision[k] << " +/- " << r.precision_stddev[k];
    }
    std::cout << "\n";
  }
  std::cout << "  ---- reference values, NOT COMPARABLE (full corpus, full-size models) ----\n"
            << "  " << kReference.at(protocol) << "\n"
            << "  reports written to " << out << "\n";
}

// --- service -----------------------------------------------------------------

void build_bundle_command(const std::string& snippets_path, const std::string& rewriter_dir,
                          const std::string& selector_dir, const std::string& out) {
  print(build_bundle(read_snippets(snippets_path), rewriter_dir, selector_dir, out));
}

void serve(const std::string& bundle_dir, const std::string& host, int port, std::size_t max_candidates) {
  SearchOptions defaults;
  defaults.max_candidates = max_candidates;
  SearchService service(defaults);
  service.set_bundle(SearchBundle::load(bundle_dir));
  httplib::Server server;
  service.register_routes(server);
  std::cout << "serving " << bundle_dir << " on http://" << host << ":" << port << std::endl;
  if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage code snippet search over Stack Overflow dumps"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Extract duplicate pairs and question snippets from a dump");
  ingest_cmd->add_option("--posts", ingest.posts, "Posts.xml")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--postlinks", ingest.postlinks, "PostLinks.xml")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--tag", ingest.tag, "Tag filter")->capture_default_str();
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();
  ingest_cmd->add_option("--val", ingest.n_val, "Validation pairs")->capture_default_str();
  ingest_cmd->add_option("--test", ingest.n_test, "Test pairs")->capture_default_str();
  ingest_cmd->callback([&] { run_ingest(ingest); });

  std::string pairs, out, model, config, titles, query, text, index, embeddings, samples, candidates, snippets;
  std::size_t n = 5;
  std::size_t beam = 10;
  std::size_t k = 4;
  std::size_t k_final = 10;
  std::size_t k_lexical = 20;
  std::uint64_t seed = 13;
  std::size_t n_val = 5000;
  std::size_t n_test = 5000;

  auto* rewriter = app.add_subcommand("rewriter", "Train and apply the question rewriter");
  rewriter->require_subcommand(1);
  auto* rw_train = rewriter->add_subcommand("train", "Train on master -> duplicate title pairs");
  rw_train->add_option("--pairs", pairs, "Duplicate pairs JSONL")->required()->check(CLI::ExistingFile);
  rw_train->add_option("--config", config, "TrainConfig JSON")->check(CLI::ExistingFile);
  rw_train->add_option("--out", out, "Model directory")->required();
  rw_train->callback([&] { rewriter_train(pairs, config, out); });
  auto* rw_para = rewriter->add_subcommand("paraphrase", "Generate paraphrases of a query");
  rw_para->add_option("--model", model, "Model directory")->required();
  rw_para->add_option("--query", query, "Query text")->required();
  rw_para->add_option("-n", n, "Paraphrases")->capture_default_str();
  rw_para->add_option("--beam", beam, "Beam width")->capture_default_str();
  rw_para->callback([&] { rewriter_paraphrase(model, query, n, beam); });
  auto* rw_embed = rewriter->add_subcommand("embed", "Embed every title of a titles file");
  rw_embed->add_option("--model", model, "Model directory")->required();
  rw_embed->add_option("--titles", titles, "Titles JSONL")->required()->check(CLI::ExistingFile);
  rw_embed->add_option("--out", out, "Embeddings JSONL")->required();
  rw_embed->callback([&] { rewriter_embed(model, titles, out); });

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Question retrieval");
  retrieve_cmd->require_subcommand(1);
  auto* build_index = retrieve_cmd->add_subcommand("build-index", "Build the lexical title index");
  build_index->add_option("--titles", titles, "Titles JSONL")->required()->check(CLI::ExistingFile);
  build_index->add_option("--out", out, "Index directory")->required();
  build_index->callback([&] { retrieve_build_index(titles, out); });
  auto* eval_pools = retrieve_cmd->add_subcommand("eval-pools", "Build evaluation candidate pools");
  eval_pools->add_option("--pairs", pairs, "Test pairs JSONL")->required()->check(CLI::ExistingFile);
  eval_pools->add_option("--index", index, "Index directory")->required();
  eval_pools->add_option("-k", k, "Lexical candidates per pool")->capture_default_str();
  eval_pools->add_option("--out", out, "Pools JSONL")->required();
  eval_pools->callback([&] { retrieve_eval_pools(pairs, index, k, out); });
  auto* query_cmd = retrieve_cmd->add_subcommand("query", "Retrieve questions for a query");
  query_cmd->add_option("--index", index, "Index directory")->required();
  query_cmd->add_option("--model", model, "Rewriter directory")->required();
  query_cmd->add_option("--embeddings", embeddings, "Title embeddings JSONL; computed when absent");
  query_cmd->add_option("--text", text, "Query text")->required();
  query_cmd->add_option("-n", n, "Paraphrases")->capture_default_str();
  query_cmd->add_option("-K", k_final, "Questions returned")->capture_default_str();
  query_cmd->add_option("--k-lexical", k_lexical, "Lexical recall depth")->capture_default_str();
  query_cmd->callback([&] { retrieve_query(index, model, embeddings, text, n, k_final, k_lexical); });

  auto* prefpairs = app.add_subcommand("prefpairs", "Preference samples");
  prefpairs->require_subcommand(1);
  auto* pp_build = prefpairs->add_subcommand("build", "Build preference samples from snippets");
  pp_build->add_option("--snippets", snippets, "Snippets JSONL")->required()->check(CLI::ExistingFile);
  pp_build->add_option("--seed", seed, "Seed")->capture_default_str();
  pp_build->add_option("--val", n_val, "Validation samples")->capture_default_str();
  pp_build->add_option("--test", n_test, "Test samples")->capture_default_str();
  pp_build->add_option("--out", out, "Output directory")->required();
  pp_build->callback([&] { prefpairs_build(snippets, seed, n_val, n_test, out); });

  auto* selector = app.add_subcommand("selector", "Train and apply the snippet selector");
  selector->require_subcommand(1);
  bool freeze = false;
  std::string encoder = "contextual";
  std::string head = "pairwise";
  auto* sel_train = selector->add_subcommand("train", "Train on preference samples");
  sel_train->add_option("--samples", samples, "Directory from prefpairs build")->required()->check(CLI::ExistingDirectory);
  sel_train->add_option("--config", config, "TrainConfig JSON")->check(CLI::ExistingFile);
  sel_train->add_flag("--freeze-encoder", freeze, "Fit only the MLP");
  sel_train->add_option("--encoder", encoder, "contextual or static_bag")->capture_default_str();
  sel_train->add_option("--head", head, "pairwise or pointwise")->capture_default_str();
  sel_train->add_option("--out", out, "Model directory")->required();
  sel_train->callback([&] { selector_train(samples, config, freeze, parse_variant(encoder, head), out); });
  std::optional<PostId> ground_truth;
  auto* sel_rank = selector->add_subcommand("rank", "Rank candidate snippets for a query");
  sel_rank->add_option("--model", model, "Model directory")->required();
  sel_rank->add_option("--query", query, "Query text")->required();
  sel_rank->add_option("--candidates", candidates, "Snippets JSONL")->required()->check(CLI::ExistingFile);
  sel_rank->add_option("--ground-truth", ground_truth, "Snippet id to locate in the ranking");
  sel_rank->add_option("--out", out, "Ranking JSON")->required();
  sel_rank->callback([&] { selector_rank(model, query, candidates, ground_truth, out); });

  auto* eval = app.add_subcommand("eval", "Evaluation protocols");
  eval->require_subcommand(1);
  for (const std::string protocol : {"rq1", "rq3", "rq4", "rq5", "rq6", "rq7"}) {
    auto* cmd = eval->add_subcommand(protocol, "Run protocol " + protocol);
    cmd->add_option("--config", config, "Eval config JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Report directory")->required();
    cmd->callback([&, protocol] { eval_command(protocol, config, out); });
  }

  std::string rewriter_dir, selector_dir, bundle, host = "127.0.0.1";
  int port = 8080;
  std::size_t max_candidates = 30;
  auto* bundle_cmd = app.add_subcommand("build-bundle", "Package models and corpus for serving");
  bundle_cmd->add_option("--snippets", snippets, "Snippets JSONL")->required()->check(CLI::ExistingFile);
  bundle_cmd->add_option("--rewriter", rewriter_dir, "Rewriter directory")->required();
  bundle_cmd->add_option("--selector", selector_dir, "Selector directory")->required();
  bundle_cmd->add_option("--out", out, "Bundle directory")->required();
  bundle_cmd->callback([&] { build_bundle_command(snippets, rewriter_dir, selector_dir, out); });
  auto* serve_cmd = app.add_subcommand("serve", "Serve POST /search and GET /healthz");
  serve_cmd->add_option("--bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();
  serve_cmd->add_option("--max-candidates", max_candidates, "Snippets ranked per query")->capture_default_str();
  serve_cmd->callback([&] { serve(bundle, host, port, max_candidates); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
