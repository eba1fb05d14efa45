#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "snipsearch/evaluation.hpp"

namespace httplib {
class Server;
}

namespace snipsearch {

/// A query the service cannot act on (client error).
struct InvalidQuery : Error {
  using Error::Error;
};

std::string question_url(PostId question_id);

struct SearchOptions {
  std::size_t k_questions = 5;
  std::size_t k_lexical = 20;
  std::size_t n_paraphrases = 5;
  std::size_t max_candidates = 30;
  std::size_t results = 5;
};

struct SearchResult {
  PostId question_id = 0;
  Tokens question_title;
  PostId snippet_id = 0;
  Tokens code;
  std::string question_url;
  double score = 0.0;
};

struct SearchResponse {
  std::string query;
  std::vector<SearchResult> results;
  double timing_ms = 0.0;

  /// Body without timing, for comparing responses.
  Json results_json() const;
  Json to_json() const;
};

/// Drops the lowest-ranked questions until at most `max_candidates` snippets
/// remain; a single question larger than the cap keeps its first snippets.
std::vector<QCPair> capped_candidates(const RankedQuestions& ranked, const SnippetsByQuestion& snippets,
                                      const Tokens& query, std::size_t max_candidates);

/// Query-time pipeline over borrowed, immutable components.
class SearchEngine {
 public:
  SearchEngine(const LexicalIndex& index, const EmbeddingStore& titles, const SnippetsByQuestion& snippets,
               const QuestionEmbedder& embedder, CandidateScorer scorer);

  /// Throws InvalidQuery for an empty or whitespace-only query.
  SearchResponse search(const std::string& query_text, const SearchOptions& options) const;

 private:
  const LexicalIndex& index_;
  const EmbeddingStore& titles_;
  const SnippetsByQuestion& snippets_;
  const QuestionEmbedder& embedder_;
  CandidateScorer scorer_;
};

/// Copies models, writes the index, title embeddings, snippet store and a
/// manifest with a hash per file. Throws ConfigError on an empty corpus.
Json build_bundle(const std::vector<QuestionSnippet>& snippets, const std::string& rewriter_dir,
                  const std::string& selector_dir, const std::string& out_dir);

/// Everything needed to serve queries, loaded from a bundle directory.
class SearchBundle {
 public:
  /// Verifies every file against the manifest; throws IntegrityError on mismatch.
  static std::unique_ptr<SearchBundle> load(const std::string& dir);

  SearchBundle(const SearchBundle&) = delete;
  SearchBundle& operator=(const SearchBundle&) = delete;

  SearchResponse search(const std::string& query_text, const SearchOptions& options) const;
  Json status() const;

  const Json& manifest() const { return manifest_; }
  const LexicalIndex& index() const { return index_; }
  std::size_t snippet_count() const { return snippet_count_; }

 private:
  SearchBundle(Json manifest, LexicalIndex index, EmbeddingStore titles, SnippetsByQuestion snippets,
               std::size_t snippet_count, RewriterModel rewriter, SelectorModel selector);

  Json manifest_;
  LexicalIndex index_;
  EmbeddingStore titles_;
  SnippetsByQuestion snippets_;
  std::size_t snippet_count_;
  RewriterModel rewriter_;
  SelectorModel selector_;
  SearchEngine engine_;
};

/// HTTP front: POST /search and GET /healthz.
class SearchService {
 public:
  explicit SearchService(SearchOptions defaults = {}) : defaults_(defaults) {}

  void set_bundle(std::shared_ptr<const SearchBundle> bundle) { std::atomic_store(&bundle_, std::move(bundle)); }

  /// {status: "ok" | "not ready", ...}
  Json healthz() const;

  struct HttpReply {
    int status = 200;
    Json body;
  };
  /// Handles a POST /search body {query, k?}.
  HttpReply handle_search(const std::string& body) const;

  void register_routes(httplib::Server& server) const;

 private:
  SearchOptions defaults_;
  std::shared_ptr<const SearchBundle> bundle_;
};

}  // namespace snipsearch
