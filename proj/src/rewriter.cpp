#include "snipsearch/rewriter.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace snipsearch {

namespace fs = std::filesystem;
using nn::Graph;
using nn::Matrix;
using nn::Var;

namespace {
constexpr int kMaxPositions = 512;
constexpr int kFormatVersion = 1;
}  // namespace

std::vector<Tokens> QuestionEmbedder::paraphrases(const Tokens&, std::size_t) const { return {}; }

EmbeddingVector embed_query(const QuestionEmbedder& embedder, const Tokens& query, std::size_t n) {
  EmbeddingVector sum = embedder.encode_question(query);
  if (n == 0) return sum;
  const auto extra = embedder.paraphrases(query, n);
  for (const auto& p : extra) {
    const EmbeddingVector e = embedder.encode_question(p);
    if (e.size() != sum.size()) throw ModelError("embed_query: dimension mismatch");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e[i];
  }
  const float count = static_cast<float>(extra.size() + 1);
  if (count > 1.0f) {
    for (auto& x : sum) x /= count;
  }
  return sum;
}

double relevance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ModelError("relevance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    diff += (x - y) * (x - y);
    na += x * x;
    nb += y * y;
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom == 0.0) return 1.0;
  const double r = 1.0 - std::sqrt(diff) / denom;
  return std::clamp(r, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

struct RewriterModel::Impl {
  Vocabulary vocab;
  ModelShape shape;
  int max_source_len;
  int max_target_len;
  std::unique_ptr<nn::ParameterStore> store = std::make_unique<nn::ParameterStore>();
  nn::Parameter* embed = nullptr;
  nn::EncoderStack encoder;
  nn::DecoderStack decoder;
  nn::LinearLayer output;

  Impl(Vocabulary v, ModelShape s, int src_len, int tgt_len, std::uint64_t seed)
      : vocab(std::move(v)), shape(s), max_source_len(src_len), max_target_len(tgt_len) {
    shape.validate();
    if (max_source_len + 1 > kMaxPositions || max_target_len + 1 > kMaxPositions) {
      throw ConfigError("rewriter sequence length exceeds position table");
    }
    Rng rng(seed);
    const int d = shape.d_model;
    const int V = static_cast<int>(vocab.size());
    embed = &store->create("embed", V, d);
    nn::init_normal(*embed, rng, 1.0f / std::sqrt(static_cast<float>(d)));
    encoder = nn::EncoderStack(*store, "enc", d, shape.encoder_layers, shape.heads, shape.d_ff, rng);
    decoder = nn::DecoderStack(*store, "dec", d, shape.decoder_layers, shape.heads, shape.d_ff, rng);
    output = nn::LinearLayer(*store, "out", d, V, rng);
  }

  std::vector<int> source_ids(const Tokens& question) const {
    std::vector<int> ids = vocab.encode(question);
    if (ids.size() > static_cast<std::size_t>(max_source_len)) ids.resize(max_source_len);
    ids.push_back(Vocabulary::kEos);
    return ids;
  }

  Var embed_positions(Graph& g, std::span<const int> ids) const {
    const float scale = std::sqrt(static_cast<float>(shape.d_model));
    Var e = g.embedding(*embed, ids, scale);
    const Matrix& pe = nn::sinusoidal_positions(kMaxPositions, shape.d_model);
    return g.add(e, g.constant(pe.topRows(static_cast<Eigen::Index>(ids.size()))));
  }

  Var encode(Graph& g, std::span<const int> src, float dropout = 0.0f, Rng* rng = nullptr) const {
    return encoder(g, embed_positions(g, src), dropout, rng);
  }

  Var decode_logits(Graph& g, Var memory, std::span<const int> dec_in, float dropout = 0.0f,
                    Rng* rng = nullptr) const {
    return output(g, decoder(g, embed_positions(g, dec_in), memory, dropout, rng));
  }

  // Log-probabilities of the token following `prefix` (without BOS).
  Eigen::VectorXf next_log_probs(const Matrix& memory, const std::vector<int>& prefix) const {
    Graph g(false);
    std::vector<int> dec_in;
    dec_in.reserve(prefix.size() + 1);
    dec_in.push_back(Vocabulary::kBos);
    dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
    Var logits = decode_logits(g, g.constant(memory), dec_in);
    Eigen::VectorXf last = g.value(logits).row(g.value(logits).rows() - 1).transpose();
    const float mx = last.maxCoeff();
    const float lse = mx + std::log((last.array() - mx).exp().sum());
    return last.array() - lse;
  }

  Matrix memory_for(const Tokens& question) const {
    Graph g(false);
    const auto src = source_ids(question);
    return g.value(encode(g, src));
  }
};

RewriterModel::RewriterModel(Vocabulary vocab, ModelShape shape, int max_source_len,
                             int max_target_len, std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(std::move(vocab), shape, max_source_len, max_target_len,
                                   init_seed)) {}

RewriterModel::~RewriterModel() = default;
RewriterModel::RewriterModel(RewriterModel&&) noexcept = default;
RewriterModel& RewriterModel::operator=(RewriterModel&&) noexcept = default;

const Vocabulary& RewriterModel::vocabulary() const { return impl_->vocab; }
const ModelShape& RewriterModel::shape() const { return impl_->shape; }
int RewriterModel::max_source_len() const { return impl_->max_source_len; }
int RewriterModel::max_target_len() const { return impl_->max_target_len; }
std::size_t RewriterModel::dimension() const {
  return static_cast<std::size_t>(impl_->shape.d_model);
}

void RewriterModel::save(const std::string& dir) const {
  fs::create_directories(dir);
  Json cfg;
  cfg["kind"] = "rewriter";
  cfg["format_version"] = kFormatVersion;
  cfg["shape"] = impl_->shape.to_json();
  cfg["max_source_len"] = impl_->max_source_len;
  cfg["max_target_len"] = impl_->max_target_len;
  cfg["vocab_size"] = impl_->vocab.size();
  write_json_file(dir + "/config.json", cfg);
  impl_->vocab.save(dir + "/vocab.txt");
  impl_->store->save(dir + "/params.bin");
}

RewriterModel RewriterModel::load(const std::string& dir) {
  const Json cfg = read_json_file(dir + "/config.json");
  if (cfg.value("kind", "") != "rewriter") throw ModelError(dir + ": not a rewriter model");
  if (cfg.value("format_version", 0) != kFormatVersion) {
    throw ModelError(dir + ": unsupported model format");
  }
  Vocabulary vocab = Vocabulary::load(dir + "/vocab.txt");
  if (vocab.size() != cfg.at("vocab_size").get<std::size_t>()) {
    throw ModelError(dir + ": vocabulary size does not match config");
  }
  RewriterModel model(std::move(vocab), ModelShape::from_json(cfg.at("shape")),
                      cfg.at("max_source_len").get<int>(), cfg.at("max_target_len").get<int>(), 0);
  model.impl_->store->load(dir + "/params.bin");
  return model;
}

EmbeddingVector RewriterModel::encode_question(const Tokens& question) const {
  if (question.empty()) throw ModelError("cannot embed an empty question");
  const Matrix memory = impl_->memory_for(question);
  // Mean over the question tokens; the trailing EOS position is excluded.
  const Eigen::Index m = memory.rows() - 1;
  Eigen::RowVectorXf mean = memory.topRows(m).colwise().mean();
  return EmbeddingVector(mean.data(), mean.data() + mean.size());
}

std::vector<Paraphrase> RewriterModel::beam_search(const Tokens& question,
                                                   std::size_t beam_width) const {
  if (question.empty()) throw ModelError("cannot paraphrase an empty question");
  if (beam_width == 0) return {};
  const Matrix memory = impl_->memory_for(question);
  const int V = static_cast<int>(impl_->vocab.size());

  struct Hyp {
    std::vector<int> ids;
    double log_prob = 0.0;
  };
  struct Candidate {
    std::size_t hyp;
    int token;
    double log_prob;
  };
  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> finished;
  std::vector<bool> finished_at_eos;

  for (int step = 0; step <= impl_->max_target_len && !live.empty(); ++step) {
    if (step == impl_->max_target_len) {
      // Length limit reached: surviving beams complete without EOS.
      for (auto& h : live) {
        finished.push_back(std::move(h));
        finished_at_eos.push_back(false);
      }
      break;
    }
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < live.size(); ++h) {
      Eigen::VectorXf lp = impl_->next_log_probs(memory, live[h].ids);
      lp(Vocabulary::kPad) = -std::numeric_limits<float>::infinity();
      lp(Vocabulary::kBos) = -std::numeric_limits<float>::infinity();
      lp(Vocabulary::kCls) = -std::numeric_limits<float>::infinity();
      lp(Vocabulary::kSep) = -std::numeric_limits<float>::infinity();
      std::vector<int> order(static_cast<std::size_t>(V));
      std::iota(order.begin(), order.end(), 0);
      const std::size_t keep = std::min<std::size_t>(beam_width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                        order.end(), [&](int a, int b) {
                          return lp(a) != lp(b) ? lp(a) > lp(b) : a < b;
                        });
      for (std::size_t i = 0; i < keep; ++i) {
        const int tok = order[i];
        if (!std::isfinite(lp(tok))) continue;
        candidates.push_back({h, tok, live[h].log_prob + lp(tok)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (candidates.size() > beam_width) candidates.resize(beam_width);
    std::vector<Hyp> next;
    for (const auto& c : candidates) {
      Hyp h{live[c.hyp].ids, c.log_prob};
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(h));
        finished_at_eos.push_back(true);
      } else {
        h.ids.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  std::vector<Paraphrase> out;
  std::vector<std::vector<int>> keys;
  std::vector<std::size_t> order(finished.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(finished.size());
  for (std::size_t i = 0; i < finished.size(); ++i) {
    const double len = static_cast<double>(finished[i].ids.size() + (finished_at_eos[i] ? 1 : 0));
    scores[i] = finished[i].log_prob / std::max(1.0, len);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : finished[a].ids < finished[b].ids;
  });
  std::set<std::vector<int>> seen;
  for (std::size_t i : order) {
    if (!seen.insert(finished[i].ids).second) continue;
    out.push_back({impl_->vocab.decode(finished[i].ids), scores[i]});
  }
  return out;
}

Tokens RewriterModel::greedy_decode(const Tokens& question) const {
  if (question.empty()) throw ModelError("cannot paraphrase an empty question");
  const Matrix memory = impl_->memory_for(question);
  std::vector<int> ids;
  for (int step = 0; step < impl_->max_target_len; ++step) {
    const Eigen::VectorXf lp = impl_->next_log_probs(memory, ids);
    int best = -1;
    for (int t = 0; t < lp.size(); ++t) {
      if (t == Vocabulary::kPad || t == Vocabulary::kBos || t == Vocabulary::kCls || t == Vocabulary::kSep) continue;
      if (best < 0 || lp(t) > lp(best)) best = t;
    }
    if (best == Vocabulary::kEos) break;
    ids.push_back(best);
  }
  return impl_->vocab.decode(ids);
}

ParaphraseSet RewriterModel::generate_paraphrases(const Tokens& question, std::size_t n,
                                                  std::size_t beam_width) const {
  if (n > beam_width) throw ConfigError("generate_paraphrases: n must not exceed beam width");
  ParaphraseSet out{question, {}};
  if (n == 0) return out;
  for (auto& p : beam_search(question, beam_width)) {
    if (p.tokens.empty() || p.tokens == question) continue;
    out.paraphrases.push_back(std::move(p));
    if (out.paraphrases.size() == n) break;
  }
  return out;
}

std::vector<Tokens> RewriterModel::paraphrases(const Tokens& question, std::size_t n) const {
  // Twice as many beams as requested leaves room for filtered duplicates.
  std::vector<Tokens> out;
  for (auto& p : generate_paraphrases(question, n, std::max<std::size_t>(2 * n, 1)).paraphrases) {
    out.push_back(std::move(p.tokens));
  }
  return out;
}

std::vector<float> RewriterModel::next_token_distribution(const Tokens& source,
                                                          const Tokens& prefix) const {
  const Matrix memory = impl_->memory_for(source);
  const Eigen::VectorXf lp = impl_->next_log_probs(memory, impl_->vocab.encode(prefix));
  std::vector<float> out(static_cast<std::size_t>(lp.size()));
  for (Eigen::Index i = 0; i < lp.size(); ++i) out[static_cast<std::size_t>(i)] = std::exp(lp(i));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct EncodedPair {
  std::vector<int> source;   // tokens + EOS
  std::vector<int> dec_in;   // BOS + tokens
  std::vector<int> targets;  // tokens + EOS
};

EncodedPair encode_pair(const RewriterModel::Impl& m, const DuplicatePair& p) {
  EncodedPair e;
  e.source = m.source_ids(p.master_title);
  std::vector<int> tgt = m.vocab.encode(p.duplicate_title);
  if (tgt.size() > static_cast<std::size_t>(m.max_target_len)) tgt.resize(m.max_target_len);
  e.dec_in.push_back(Vocabulary::kBos);
  e.dec_in.insert(e.dec_in.end(), tgt.begin(), tgt.end());
  e.targets = tgt;
  e.targets.push_back(Vocabulary::kEos);
  return e;
}

std::size_t count_correct(const Matrix& logits, const std::vector<int>& targets) {
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index arg = 0;
    logits.row(r).maxCoeff(&arg);
    if (arg == targets[static_cast<std::size_t>(r)]) ++correct;
  }
  return correct;
}

}  // namespace

RewriterModel train_rewriter(const std::vector<DuplicatePair>& pairs, const TrainConfig& config,
                             TrainLog* log) {
  config.validate();
  if (pairs.empty()) throw ConfigError("train_rewriter: empty training corpus");

  std::vector<Tokens> corpus;
  corpus.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    corpus.push_back(p.master_title);
    corpus.push_back(p.duplicate_title);
  }
  RewriterModel model(Vocabulary::build(corpus, config.min_frequency, config.max_vocab),
                      config.shape, config.max_source_len, config.max_target_len, config.seed);
  auto& impl = model.impl();

  std::vector<EncodedPair> data;
  data.reserve(pairs.size());
  for (const auto& p : pairs) data.push_back(encode_pair(impl, p));

  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.clip_norm = config.clip_norm;
  adam_cfg.warmup_steps = config.warmup_steps;
  nn::Adam adam(*impl.store, adam_cfg);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(mix_seed(config.seed ^ 0x5eedULL, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      impl.store->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const EncodedPair& e = data[order[i]];
        Graph g(true);
        Rng* drop = config.dropout > 0.0f ? &dropout_rng : nullptr;
        Var memory = impl.encode(g, e.source, config.dropout, drop);
        Var logits = impl.decode_logits(g, memory, e.dec_in, config.dropout, drop);
        Var loss = g.cross_entropy(logits, e.targets);
        const double l = g.value(loss)(0, 0);
        batch_loss += l;
        loss_sum += l * static_cast<double>(e.targets.size());
        tokens += e.targets.size();
        correct += count_correct(g.value(logits), e.targets);
        g.backward(loss, 1.0f / static_cast<float>(end - start));
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("train_rewriter: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting " + std::to_string(start) + " (loss " +
                            std::to_string(batch_loss) + ")");
      }
      const double norm = adam.step();
      if (!std::isfinite(norm)) {
        throw TrainingError("train_rewriter: non-finite gradient at epoch " +
                            std::to_string(epoch));
      }
    }
    if (log) {
      log->epochs.push_back({epoch + 1, loss_sum / static_cast<double>(tokens),
                             static_cast<double>(correct) / static_cast<double>(tokens), -1.0});
    }
  }
  return model;
}

double teacher_forced_accuracy(const RewriterModel& model, const std::vector<DuplicatePair>& pairs) {
  const auto& impl = model.impl();
  std::size_t tokens = 0;
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    const EncodedPair e = encode_pair(impl, p);
    Graph g(false);
    Var memory = impl.encode(g, e.source);
    Var logits = impl.decode_logits(g, memory, e.dec_in);
    correct += count_correct(g.value(logits), e.targets);
    tokens += e.targets.size();
  }
  return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
}

}  // namespace snipsearch
