#include "snipsearch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace snipsearch {

namespace fs = std::filesystem;

namespace {
constexpr int kIndexFormatVersion = 1;

std::map<std::string, int> term_counts(const Tokens& tokens) {
  std::map<std::string, int> tf;
  for (const auto& t : tokens) ++tf[t];
  return tf;
}
}  // namespace

void sort_by_score(std::vector<ScoredId>& items) {
  std::sort(items.begin(), items.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
}

LexicalIndex LexicalIndex::build(const std::map<PostId, Tokens>& titles) {
  LexicalIndex index;
  index.titles_ = titles;
  index.finalize();
  return index;
}

void LexicalIndex::finalize() {
  doc_ids_.clear();
  postings_.clear();
  for (const auto& [id, tokens] : titles_) {
    const std::size_t doc = doc_ids_.size();
    doc_ids_.push_back(id);
    for (const auto& [tok, tf] : term_counts(tokens)) postings_[tok].postings.push_back({doc, tf});
  }
  const double n_docs = static_cast<double>(doc_ids_.size());
  doc_norms_.assign(doc_ids_.size(), 0.0);
  for (auto& [tok, term] : postings_) {
    term.idf = std::log(n_docs / (1.0 + static_cast<double>(term.postings.size()))) + 1.0;
    for (const auto& p : term.postings) {
      const double w = p.tf * term.idf;
      doc_norms_[p.doc] += w * w;
    }
  }
  for (auto& n : doc_norms_) n = std::sqrt(n);
}

double LexicalIndex::idf(const std::string& token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? 0.0 : it->second.idf;
}

std::vector<std::pair<PostId, int>> LexicalIndex::postings(const std::string& token) const {
  std::vector<std::pair<PostId, int>> out;
  auto it = postings_.find(token);
  if (it == postings_.end()) return out;
  for (const auto& p : it->second.postings) out.emplace_back(doc_ids_[p.doc], p.tf);
  return out;
}

const Tokens& LexicalIndex::title(PostId id) const {
  auto it = titles_.find(id);
  if (it == titles_.end()) throw Error("question " + std::to_string(id) + " not in index");
  return it->second;
}

std::vector<ScoredId> LexicalIndex::score(const Tokens& query) const {
  std::vector<double> dots(doc_ids_.size(), 0.0);
  std::vector<bool> touched(doc_ids_.size(), false);
  double q_norm = 0.0;
  for (const auto& [tok, tf] : term_counts(query)) {
    auto it = postings_.find(tok);
    if (it == postings_.end()) continue;
    const double wq = tf * it->second.idf;
    q_norm += wq * wq;
    for (const auto& p : it->second.postings) {
      dots[p.doc] += wq * p.tf * it->second.idf;
      touched[p.doc] = true;
    }
  }
  std::vector<ScoredId> out;
  if (q_norm == 0.0) return out;
  q_norm = std::sqrt(q_norm);
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    if (!touched[d] || doc_norms_[d] == 0.0) continue;
    const double cos = dots[d] / (q_norm * doc_norms_[d]);
    if (cos > 0.0) out.push_back({doc_ids_[d], cos});
  }
  sort_by_score(out);
  return out;
}

std::vector<PostId> LexicalIndex::topk(const Tokens& query, std::size_t k) const {
  std::vector<PostId> out;
  for (const auto& s : score(query)) {
    if (out.size() == k) break;
    out.push_back(s.id);
  }
  return out;
}

std::vector<PostId> lexical_topk(const LexicalIndex& index, const Tokens& query, std::size_t k) {
  if (k == 0) throw ConfigError("lexical_topk: k must be at least 1");
  return index.topk(query, k);
}

void LexicalIndex::save(const std::string& dir) const {
  fs::create_directories(dir);
  Json manifest;
  manifest["format_version"] = kIndexFormatVersion;
  manifest["documents"] = titles_.size();
  manifest["terms"] = postings_.size();
  write_json_file(dir + "/manifest.json", manifest);

  std::ofstream docs(dir + "/documents.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto& [id, tokens] : titles_) {
    Json j;
    j["id"] = id;
    j["title"] = tokens;
    docs << j.dump() << '\n';
  }
  // Terms in lexicographic order so the file is byte-stable.
  std::vector<const std::string*> terms;
  for (const auto& [tok, term] : postings_) terms.push_back(&tok);
  std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
  std::ofstream post(dir + "/postings.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto* tok : terms) {
    const Term& term = postings_.at(*tok);
    Json j;
    j["token"] = *tok;
    j["idf"] = term.idf;
    Json list = Json::array();
    for (const auto& p : term.postings) list.push_back({doc_ids_[p.doc], p.tf});
    j["postings"] = std::move(list);
    post << j.dump() << '\n';
  }
  if (!docs || !post) throw Error("failed to write index into " + dir);
}

LexicalIndex LexicalIndex::load(const std::string& dir) {
  const Json manifest = read_json_file(dir + "/manifest.json");
  if (manifest.value("format_version", 0) != kIndexFormatVersion) {
    throw Error(dir + ": unsupported index format");
  }
  std::map<PostId, Tokens> titles;
  for (const auto& j : read_jsonl<Json>(dir + "/documents.jsonl", [](const Json& j) { return j; })) {
    titles.emplace(j.at("id").get<PostId>(), j.at("title").get<Tokens>());
  }
  LexicalIndex index = build(titles);
  // The postings file must agree with what the documents imply.
  std::size_t terms = 0;
  for (const auto& j : read_jsonl<Json>(dir + "/postings.jsonl", [](const Json& j) { return j; })) {
    ++terms;
    const auto tok = j.at("token").get<std::string>();
    auto it = index.postings_.find(tok);
    if (it == index.postings_.end() || it->second.postings.size() != j.at("postings").size()) {
      throw IntegrityError(dir + ": postings for '" + tok + "' disagree with documents");
    }
  }
  if (terms != index.postings_.size() ||
      manifest.at("documents").get<std::size_t>() != index.size()) {
    throw IntegrityError(dir + ": index manifest disagrees with contents");
  }
  return index;
}

// ---------------------------------------------------------------------------

EmbeddingStore EmbeddingStore::build(const QuestionEmbedder& embedder,
                                     const std::map<PostId, Tokens>& titles) {
  EmbeddingStore store;
  for (const auto& [id, tokens] : titles) {
    if (tokens.empty()) continue;
    store.vectors_.emplace(id, embedder.encode_question(tokens));
  }
  return store;
}

const EmbeddingVector& EmbeddingStore::at(PostId id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw Error("no embedding for question " + std::to_string(id));
  return it->second;
}

void EmbeddingStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [id, v] : vectors_) {
    Json j;
    j["id"] = id;
    j["vector"] = v;
    out << j.dump() << '\n';
  }
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  EmbeddingStore store;
  std::size_t dim = 0;
  for (const auto& j : read_jsonl<Json>(path, [](const Json& j) { return j; })) {
    auto v = j.at("vector").get<EmbeddingVector>();
    if (dim == 0) dim = v.size();
    if (v.size() != dim) throw IntegrityError(path + ": inconsistent embedding widths");
    store.vectors_[j.at("id").get<PostId>()] = std::move(v);
  }
  return store;
}

// ---------------------------------------------------------------------------

CandidatePool build_eval_pool(const DuplicatePair& test_pair, const LexicalIndex& index,
                              std::size_t k) {
  if (k == 0) throw ConfigError("build_eval_pool: k must be at least 1");
  if (!index.contains(test_pair.master_id)) {
    throw Error("build_eval_pool: master question " + std::to_string(test_pair.master_id) +
                " missing from the index");
  }
  CandidatePool pool;
  pool.query_id = test_pair.duplicate_id;
  pool.master_id = test_pair.master_id;
  for (PostId id : index.topk(test_pair.duplicate_title, k + 1)) {
    if (id == test_pair.duplicate_id) continue;
    if (pool.candidates.size() == k) break;
    pool.candidates.push_back(id);
  }
  if (std::find(pool.candidates.begin(), pool.candidates.end(), pool.master_id) ==
      pool.candidates.end()) {
    pool.candidates.push_back(pool.master_id);
    pool.injected = true;
  }
  return pool;
}

RankedQuestions rank_candidates(const EmbeddingVector& query_vector, const EmbeddingStore& titles,
                                const std::vector<PostId>& candidates, PostId query_id,
                                std::optional<PostId> ground_truth) {
  RankedQuestions out;
  out.query_id = query_id;
  out.ranked.reserve(candidates.size());
  for (PostId id : candidates) out.ranked.push_back({id, relevance(query_vector, titles.at(id))});
  sort_by_score(out.ranked);
  if (ground_truth) {
    for (std::size_t i = 0; i < out.ranked.size(); ++i) {
      if (out.ranked[i].id == *ground_truth) out.ground_truth_rank = i + 1;
    }
  }
  return out;
}

RankedQuestions rank_pool(const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                          const CandidatePool& pool, const Tokens& query,
                          std::size_t n_paraphrases) {
  return rank_candidates(embed_query(embedder, query, n_paraphrases), titles, pool.candidates,
                         pool.query_id, pool.master_id);
}

RankedQuestions retrieve(const Tokens& query, const LexicalIndex& index,
                         const QuestionEmbedder& embedder, const EmbeddingStore& titles,
                         std::size_t k_lexical, std::size_t k_final, std::size_t n_paraphrases) {
  if (k_final > k_lexical) throw ConfigError("retrieve: k_final must not exceed k_lexical");
  if (query.empty()) return {};
  const auto recalled = lexical_topk(index, query, k_lexical);
  if (recalled.empty()) return {};
  auto ranked = rank_candidates(embed_query(embedder, query, n_paraphrases), titles, recalled, 0,
                                std::nullopt);
  if (ranked.ranked.size() > k_final) ranked.ranked.resize(k_final);
  return ranked;
}

}  // namespace snipsearch
