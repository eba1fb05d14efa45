#include "snipsearch/service.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

#include <httplib.h>

#include "snipsearch/text.hpp"

namespace snipsearch {

namespace fs = std::filesystem;

namespace {
constexpr int kBundleVersion = 1;

// Files hashed into the manifest, relative to the bundle root.
const std::vector<std::string>& bundle_files() {
  static const std::vector<std::string> files{
      "snippets.jsonl",          "embeddings.jsonl",       "index/manifest.json",
      "index/documents.jsonl",   "index/postings.jsonl",   "rewriter/config.json",
      "rewriter/params.bin",     "rewriter/vocab.txt",     "selector/config.json",
      "selector/params.bin",     "selector/vocab.txt"};
  return files;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void copy_model(const std::string& from, const std::string& to) {
  fs::create_directories(to);
  for (const char* name : {"config.json", "params.bin", "vocab.txt"}) {
    const fs::path src = fs::path(from) / name;
    if (!fs::exists(src)) throw ConfigError("model file missing: " + src.string());
    fs::copy_file(src, fs::path(to) / name, fs::copy_options::overwrite_existing);
  }
}

}  // namespace

std::string question_url(PostId question_id) {
  return "https://stackoverflow.com/questions/" + std::to_string(question_id);
}

Json SearchResponse::results_json() const {
  Json out = Json::array();
  for (const auto& r : results) {
    Json j;
    j["question_id"] = r.question_id;
    j["question_title"] = join(r.question_title);
    j["snippet_id"] = r.snippet_id;
    j["code"] = join(r.code);
    j["question_url"] = r.question_url;
    j["score"] = r.score;
    out.push_back(std::move(j));
  }
  return out;
}

Json SearchResponse::to_json() const {
  Json j;
  j["query"] = query;
  j["results"] = results_json();
  j["timing_ms"] = timing_ms;
  return j;
}

std::vector<QCPair> capped_candidates(const RankedQuestions& ranked, const SnippetsByQuestion& snippets,
                                      const Tokens& query, std::size_t max_candidates) {
  RankedQuestions kept = ranked;
  auto candidates = gather_candidates(kept, snippets, query);
  while (candidates.size() > max_candidates && kept.ranked.size() > 1) {
    kept.ranked.pop_back();
    candidates = gather_candidates(kept, snippets, query);
  }
  if (candidates.size() > max_candidates) candidates.resize(max_candidates);
  return candidates;
}

SearchEngine::SearchEngine(const LexicalIndex& index, const EmbeddingStore& titles,
                           const SnippetsByQuestion& snippets, const QuestionEmbedder& embedder,
                           CandidateScorer scorer)
    : index_(index), titles_(titles), snippets_(snippets), embedder_(embedder), scorer_(std::move(scorer)) {}

SearchResponse SearchEngine::search(const std::string& query_text, const SearchOptions& options) const {
  const auto start = std::chrono::steady_clock::now();
  const Tokens query = tokenize_title(query_text);
  if (query.empty()) throw InvalidQuery("query is empty");
  if (options.k_questions == 0 || options.results == 0 || options.max_candidates == 0) {
    throw InvalidQuery("k, results and max_candidates must be positive");
  }

  SearchResponse response;
  response.query = query_text;
  const RankedQuestions ranked =
      retrieve(query, index_, embedder_, titles_, std::max(options.k_lexical, options.k_questions),
               options.k_questions, options.n_paraphrases);
  const auto candidates = capped_candidates(ranked, snippets_, query, options.max_candidates);
  if (!candidates.empty()) {
    const SnippetRanking ranking = order_candidates(query, candidates, scorer_(candidates));
    std::map<PostId, const QuestionSnippet*> by_id;
    for (const auto& c : candidates) {
      for (const auto& s : snippets_.at(c.origin_question_id)) {
        if (s.snippet_id == c.snippet_id) by_id[s.snippet_id] = &s;
      }
    }
    for (const auto& r : ranking.ranked) {
      if (response.results.size() == options.results) break;
      const QuestionSnippet& s = *by_id.at(r.snippet_id);
      response.results.push_back({s.question_id, s.title, s.snippet_id, s.code, question_url(s.question_id), r.score});
    }
  }
  response.timing_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return response;
}

Json build_bundle(const std::vector<QuestionSnippet>& snippets, const std::string& rewriter_dir,
                  const std::string& selector_dir, const std::string& out_dir) {
  if (snippets.empty()) throw ConfigError("build_bundle: empty snippet corpus");
  fs::create_directories(out_dir);
  copy_model(rewriter_dir, out_dir + "/rewriter");
  copy_model(selector_dir, out_dir + "/selector");

  std::map<PostId, Tokens> titles;
  for (const auto& s : snippets) titles.emplace(s.question_id, s.title);
  const LexicalIndex index = LexicalIndex::build(titles);
  index.save(out_dir + "/index");
  const RewriterModel rewriter = RewriterModel::load(out_dir + "/rewriter");
  EmbeddingStore::build(rewriter, titles).save(out_dir + "/embeddings.jsonl");
  write_snippets(out_dir + "/snippets.jsonl", snippets);

  Json manifest;
  manifest["format_version"] = kBundleVersion;
  manifest["built_at"] = utc_now();
  manifest["counts"] = {{"questions", titles.size()},
                        {"snippets", snippets.size()},
                        {"index_terms", index.vocabulary_size()}};
  Json hashes;
  for (const auto& f : bundle_files()) hashes[f] = hash_file(out_dir + "/" + f);
  manifest["corpus_hash"] = hashes["snippets.jsonl"];
  manifest["model_hashes"] = {{"rewriter", hashes["rewriter/params.bin"]},
                              {"selector", hashes["selector/params.bin"]}};
  manifest["files"] = std::move(hashes);
  write_json_file(out_dir + "/manifest.json", manifest);
  return manifest;
}

SearchBundle::SearchBundle(Json manifest, LexicalIndex index, EmbeddingStore titles,
                           SnippetsByQuestion snippets, std::size_t snippet_count, RewriterModel rewriter,
                           SelectorModel selector)
    : manifest_(std::move(manifest)),
      index_(std::move(index)),
      titles_(std::move(titles)),
      snippets_(std::move(snippets)),
      snippet_count_(snippet_count),
      rewriter_(std::move(rewriter)),
      selector_(std::move(selector)),
      engine_(index_, titles_, snippets_, rewriter_, scorer_for(selector_)) {}

std::unique_ptr<SearchBundle> SearchBundle::load(const std::string& dir) {
  const Json manifest = read_json_file(dir + "/manifest.json");
  if (manifest.value("format_version", 0) != kBundleVersion) {
    throw IntegrityError(dir + ": unsupported bundle format");
  }
  const Json& files = manifest.at("files");
  for (const auto& f : bundle_files()) {
    if (!files.contains(f)) throw IntegrityError(dir + ": manifest does not list " + f);
    const std::string path = dir + "/" + f;
    if (!fs::exists(path)) throw IntegrityError(dir + ": missing " + f);
    const std::string actual = hash_file(path);
    const std::string expected = files.at(f).get<std::string>();
    if (actual != expected) {
      throw IntegrityError(dir + ": hash mismatch for " + f + " (manifest " + expected + ", file " + actual + ")");
    }
  }
  if (manifest.at("corpus_hash") != files.at("snippets.jsonl") ||
      manifest.at("model_hashes").at("rewriter") != files.at("rewriter/params.bin") ||
      manifest.at("model_hashes").at("selector") != files.at("selector/params.bin")) {
    throw IntegrityError(dir + ": manifest hashes disagree with each other");
  }

  auto snippets = read_snippets(dir + "/snippets.jsonl");
  LexicalIndex index = LexicalIndex::load(dir + "/index");
  EmbeddingStore titles = EmbeddingStore::load(dir + "/embeddings.jsonl");
  for (const auto& [id, title] : index.titles()) {
    if (!titles.contains(id)) throw IntegrityError(dir + ": no embedding for question " + std::to_string(id));
  }
  for (const auto& s : snippets) {
    if (!index.contains(s.question_id)) {
      throw IntegrityError(dir + ": snippet " + std::to_string(s.snippet_id) + " has no indexed question");
    }
  }
  const std::size_t count = snippets.size();
  const auto expected_count = manifest.at("counts").at("snippets").get<std::size_t>();
  if (count != expected_count) throw IntegrityError(dir + ": snippet count disagrees with manifest");
  return std::unique_ptr<SearchBundle>(new SearchBundle(
      manifest, std::move(index), std::move(titles), group_by_question(snippets), count,
      RewriterModel::load(dir + "/rewriter"), SelectorModel::load(dir + "/selector")));
}

SearchResponse SearchBundle::search(const std::string& query_text, const SearchOptions& options) const {
  return engine_.search(query_text, options);
}

Json SearchBundle::status() const {
  Json j;
  j["status"] = "ok";
  j["manifest"] = manifest_;
  j["counts"] = {{"questions", index_.size()},
                 {"snippets", snippet_count_},
                 {"index_terms", index_.vocabulary_size()},
                 {"embeddings", titles_.size()}};
  return j;
}

Json SearchService::healthz() const {
  const auto bundle = std::atomic_load(&bundle_);
  if (!bundle) return Json{{"status", "not ready"}};
  return bundle->status();
}

SearchService::HttpReply SearchService::handle_search(const std::string& body) const {
  const auto bundle = std::atomic_load(&bundle_);
  if (!bundle) return {503, Json{{"error", "bundle not loaded"}}};
  Json request;
  try {
    request = Json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return {400, Json{{"error", "request body is not valid JSON"}}};
  }
  if (!request.is_object() || !request.contains("query") || !request["query"].is_string()) {
    return {400, Json{{"error", "field 'query' (string) is required"}}};
  }
  SearchOptions options = defaults_;
  if (request.contains("k")) {
    if (!request["k"].is_number_unsigned() || request["k"].get<std::size_t>() == 0) {
      return {400, Json{{"error", "field 'k' must be a positive integer"}}};
    }
    options.k_questions = request["k"].get<std::size_t>();
  }
  try {
    return {200, bundle->search(request["query"].get<std::string>(), options).to_json()};
  } catch (const InvalidQuery& e) {
    return {400, Json{{"error", e.what()}}};
  } catch (const std::exception& e) {
    return {500, Json{{"error", e.what()}}};
  }
}

void SearchService::register_routes(httplib::Server& server) const {
  server.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply reply = handle_search(req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  });
  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    const Json body = healthz();
    res.status = body.value("status", "") == "ok" ? 200 : 503;
    res.set_content(body.dump(), "application/json");
  });
}

}  // namespace snipsearch
