#include "snipsearch/selector.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
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

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string_view encoder_name(EncoderKind k) {
  return k == EncoderKind::contextual ? "contextual" : "static_bag";
}
std::string_view head_name(HeadKind k) { return k == HeadKind::pairwise ? "pairwise" : "pointwise"; }
}  // namespace

Json SelectorVariant::to_json() const {
  Json j;
  j["encoder"] = std::string(encoder_name(encoder));
  j["head"] = std::string(head_name(head));
  return j;
}

SelectorVariant SelectorVariant::from_json(const Json& j) {
  SelectorVariant v;
  const auto enc = j.value("encoder", std::string("contextual"));
  const auto head = j.value("head", std::string("pairwise"));
  if (enc == "contextual") {
    v.encoder = EncoderKind::contextual;
  } else if (enc == "static_bag") {
    v.encoder = EncoderKind::static_bag;
  } else {
    throw ConfigError("unknown selector encoder '" + enc + "'");
  }
  if (head == "pairwise") {
    v.head = HeadKind::pairwise;
  } else if (head == "pointwise") {
    v.head = HeadKind::pointwise;
  } else {
    throw ConfigError("unknown selector head '" + head + "'");
  }
  return v;
}

void SnippetRanking::mark_ground_truth(PostId snippet_id) {
  ground_truth_rank.reset();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].snippet_id == snippet_id) {
      ground_truth_rank = i + 1;
      return;
    }
  }
}

Json to_json(const SnippetRanking& ranking) {
  Json j;
  j["query"] = ranking.query;
  Json ranked = Json::array();
  for (const auto& r : ranking.ranked) {
    ranked.push_back({{"snippet_id", r.snippet_id}, {"question_id", r.question_id}, {"score", r.score}});
  }
  j["ranked"] = std::move(ranked);
  if (ranking.ground_truth_rank) j["ground_truth_rank"] = *ranking.ground_truth_rank;
  return j;
}

std::vector<double> tournament_scores(std::size_t n, const PreferenceFn& pref) {
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) scores[i] += pref(i, j);
    }
  }
  return scores;
}

SnippetRanking order_candidates(const Tokens& query, const std::vector<QCPair>& candidates,
                                const std::vector<double>& scores) {
  if (scores.size() != candidates.size()) throw Error("order_candidates: size mismatch");
  SnippetRanking out{query, {}, std::nullopt};
  out.ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.ranked.push_back({candidates[i].snippet_id, candidates[i].origin_question_id, scores[i]});
  }
  std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedSnippet& a, const RankedSnippet& b) {
    return a.score != b.score ? a.score > b.score : a.snippet_id < b.snippet_id;
  });
  return out;
}

// ---------------------------------------------------------------------------

struct SelectorModel::Impl {
  Vocabulary vocab;
  ModelShape shape;
  SelectorVariant variant;
  int max_input_len;
  std::unique_ptr<nn::ParameterStore> store = std::make_unique<nn::ParameterStore>();
  nn::Parameter* embed = nullptr;
  nn::Parameter* segment = nullptr;
  nn::EncoderStack encoder;
  std::vector<nn::LinearLayer> hidden;
  nn::LinearLayer output;

  Impl(Vocabulary v, ModelShape s, SelectorVariant var, int max_len, std::uint64_t seed)
      : vocab(std::move(v)), shape(s), variant(var), max_input_len(max_len) {
    shape.validate();
    if (max_input_len < 3 || max_input_len > kMaxPositions) {
      throw ConfigError("selector max_input_len must be in [3, 512]");
    }
    Rng rng(seed);
    const int d = shape.d_model;
    embed = &store->create("embed", static_cast<int>(vocab.size()), d);
    nn::init_normal(*embed, rng, 1.0f / std::sqrt(static_cast<float>(d)));
    if (variant.encoder == EncoderKind::contextual) {
      segment = &store->create("segment", 2, d);
      nn::init_normal(*segment, rng, 1.0f / std::sqrt(static_cast<float>(d)));
      encoder = nn::EncoderStack(*store, "enc", d, shape.encoder_layers, shape.heads, shape.d_ff, rng);
    }
    // Three hidden layers; the first is as wide as the joint input.
    int width = variant.head == HeadKind::pairwise ? 2 * d : d;
    int in = width;
    for (int i = 0; i < 3; ++i) {
      hidden.emplace_back(*store, "mlp.h" + std::to_string(i), in, width, rng);
      in = width;
      width = std::max(1, width / 2);
    }
    output = nn::LinearLayer(*store, "mlp.out", in, 1, rng);
    nn::init_constant(output.weight(), 0.0f);
    nn::init_constant(output.bias(), 0.0f);
  }

  std::vector<int> input_ids(const Tokens& title, const Tokens& code) const {
    if (title.empty() && code.empty()) throw ModelError("cannot encode an empty question-code pair");
    std::vector<int> ids{Vocabulary::kCls};
    const auto budget = static_cast<std::size_t>(max_input_len);
    for (const auto& t : title) {
      if (ids.size() + 1 >= budget) break;
      ids.push_back(vocab.index(t));
    }
    ids.push_back(Vocabulary::kSep);
    for (const auto& t : code) {
      if (ids.size() >= budget) break;
      ids.push_back(vocab.index(t));
    }
    return ids;
  }

  Var encode(Graph& g, const std::vector<int>& ids, float dropout = 0.0f, Rng* rng = nullptr) const {
    if (variant.encoder == EncoderKind::static_bag) {
      std::vector<int> bag;
      for (int id : ids) {
        if (id != Vocabulary::kCls && id != Vocabulary::kSep) bag.push_back(id);
      }
      return g.mean_rows(g.embedding(*embed, bag));
    }
    const float scale = std::sqrt(static_cast<float>(shape.d_model));
    std::vector<int> seg(ids.size(), 0);
    const auto sep = std::find(ids.begin(), ids.end(), Vocabulary::kSep);
    std::fill(seg.begin() + (sep - ids.begin()) + 1, seg.end(), 1);
    Var x = g.embedding(*embed, ids, scale);
    x = g.add(x, g.embedding(*segment, seg));
    const Matrix& pe = nn::sinusoidal_positions(kMaxPositions, shape.d_model);
    x = g.add(x, g.constant(pe.topRows(static_cast<Eigen::Index>(ids.size()))));
    return g.row(encoder(g, x, dropout, rng), 0);
  }

  Var head(Graph& g, Var joint) const {
    Var h = joint;
    for (const auto& layer : hidden) h = g.relu(layer(g, h));
    return output(g, h);
  }

  Matrix encode_value(const std::vector<int>& ids) const {
    Graph g(false);
    return g.value(encode(g, ids));
  }

  // Logits of the MLP for a batch of joint inputs, one per row.
  Eigen::VectorXf mlp_rows(Matrix x, std::size_t first_layer = 0) const {
    for (std::size_t i = first_layer; i < hidden.size(); ++i) {
      Matrix y = x * hidden[i].weight().value;
      y.rowwise() += hidden[i].bias().value.row(0);
      x = y.cwiseMax(0.0f);
    }
    Matrix out = x * output.weight().value;
    out.array() += output.bias().value(0, 0);
    return out.col(0);
  }
};

SelectorModel::SelectorModel(Vocabulary vocab, ModelShape shape, SelectorVariant variant,
                             int max_input_len, std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(std::move(vocab), shape, variant, max_input_len, init_seed)) {}

SelectorModel::~SelectorModel() = default;
SelectorModel::SelectorModel(SelectorModel&&) noexcept = default;
SelectorModel& SelectorModel::operator=(SelectorModel&&) noexcept = default;

const Vocabulary& SelectorModel::vocabulary() const { return impl_->vocab; }
const ModelShape& SelectorModel::shape() const { return impl_->shape; }
const SelectorVariant& SelectorModel::variant() const { return impl_->variant; }
int SelectorModel::max_input_len() const { return impl_->max_input_len; }
std::size_t SelectorModel::dimension() const { return static_cast<std::size_t>(impl_->shape.d_model); }

std::vector<int> SelectorModel::input_ids(const Tokens& title, const Tokens& code) const {
  return impl_->input_ids(title, code);
}

void SelectorModel::save(const std::string& dir) const {
  fs::create_directories(dir);
  Json cfg;
  cfg["kind"] = "selector";
  cfg["format_version"] = kFormatVersion;
  cfg["shape"] = impl_->shape.to_json();
  cfg["variant"] = impl_->variant.to_json();
  cfg["max_input_len"] = impl_->max_input_len;
  cfg["vocab_size"] = impl_->vocab.size();
  write_json_file(dir + "/config.json", cfg);
  impl_->vocab.save(dir + "/vocab.txt");
  impl_->store->save(dir + "/params.bin");
}

SelectorModel SelectorModel::load(const std::string& dir) {
  const Json cfg = read_json_file(dir + "/config.json");
  if (cfg.value("kind", "") != "selector") throw ModelError(dir + ": not a selector model");
  if (cfg.value("format_version", 0) != kFormatVersion) {
    throw ModelError(dir + ": unsupported model format");
  }
  Vocabulary vocab = Vocabulary::load(dir + "/vocab.txt");
  if (vocab.size() != cfg.at("vocab_size").get<std::size_t>()) {
    throw ModelError(dir + ": vocabulary size does not match config");
  }
  SelectorModel model(std::move(vocab), ModelShape::from_json(cfg.at("shape")),
                      SelectorVariant::from_json(cfg.at("variant")),
                      cfg.at("max_input_len").get<int>(), 0);
  model.impl_->store->load(dir + "/params.bin");
  return model;
}

EmbeddingVector SelectorModel::encode_qc(const Tokens& title, const Tokens& code) const {
  const Matrix h = impl_->encode_value(impl_->input_ids(title, code));
  return EmbeddingVector(h.data(), h.data() + h.size());
}

double SelectorModel::preference_score(const QCPair& first, const QCPair& second) const {
  const Matrix h1 = impl_->encode_value(impl_->input_ids(first.question_title, first.code));
  const Matrix h2 = impl_->encode_value(impl_->input_ids(second.question_title, second.code));
  if (impl_->variant.head == HeadKind::pointwise) {
    const auto l1 = impl_->mlp_rows(h1);
    const auto l2 = impl_->mlp_rows(h2);
    return sigmoid(static_cast<double>(l1(0)) - static_cast<double>(l2(0)));
  }
  Matrix joint(1, h1.cols() + h2.cols());
  joint << h1, h2;
  return sigmoid(impl_->mlp_rows(std::move(joint))(0));
}

double SelectorModel::pointwise_score(const QCPair& pair) const {
  if (impl_->variant.head != HeadKind::pointwise) {
    throw ModelError("pointwise_score needs a pointwise selector");
  }
  return sigmoid(impl_->mlp_rows(impl_->encode_value(impl_->input_ids(pair.question_title, pair.code)))(0));
}

std::vector<double> SelectorModel::candidate_scores(const std::vector<QCPair>& candidates) const {
  const auto m = static_cast<Eigen::Index>(candidates.size());
  if (m == 0) return {};
  const Eigen::Index d = impl_->shape.d_model;
  Matrix H(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& c = candidates[static_cast<std::size_t>(i)];
    H.row(i) = impl_->encode_value(impl_->input_ids(c.question_title, c.code)).row(0);
  }
  std::vector<double> scores(candidates.size(), 0.0);
  if (impl_->variant.head == HeadKind::pointwise) {
    const auto logits = impl_->mlp_rows(H);
    for (Eigen::Index i = 0; i < m; ++i) scores[static_cast<std::size_t>(i)] = sigmoid(logits(i));
    return scores;
  }
  if (m == 1) return scores;
  // The first layer splits over the two halves of the joint input, so each
  // candidate's contribution is computed once and pairs only add rows.
  const auto& w1 = impl_->hidden[0].weight().value;
  const Matrix A = H * w1.topRows(d);
  Matrix B = H * w1.bottomRows(d);
  B.rowwise() += impl_->hidden[0].bias().value.row(0);
  Matrix pairs(m * (m - 1), w1.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      pairs.row(r++) = (A.row(i) + B.row(j)).cwiseMax(0.0f);
    }
  }
  const auto logits = impl_->mlp_rows(std::move(pairs), 1);
  r = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      scores[static_cast<std::size_t>(i)] += sigmoid(logits(r++));
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------

namespace {

struct Item {
  std::vector<int> first;
  std::vector<int> second;  // empty for pointwise items
  float label = 0.0f;
};

std::vector<Item> make_items(const SelectorModel& model, const std::vector<PreferenceSample>& samples) {
  std::vector<Item> items;
  if (model.variant().head == HeadKind::pairwise) {
    items.reserve(samples.size());
    for (const auto& s : samples) {
      items.push_back({model.input_ids(s.first.question_title, s.first.code),
                       model.input_ids(s.second.question_title, s.second.code),
                       static_cast<float>(s.label)});
    }
    return items;
  }
  // Best pairs are positives, every other pair a negative.
  std::set<std::pair<std::vector<int>, int>> seen;
  for (const auto& s : samples) {
    for (const QCPair* p : {&s.first, &s.second}) {
      const int label = p->source_role == SnippetRole::best ? 1 : 0;
      auto ids = model.input_ids(p->question_title, p->code);
      if (seen.insert({ids, label}).second) items.push_back({std::move(ids), {}, static_cast<float>(label)});
    }
  }
  return items;
}

Vocabulary selector_vocabulary(const std::vector<PreferenceSample>& samples, const TrainConfig& config) {
  std::set<Tokens> titles;
  std::set<Tokens> codes;
  for (const auto& s : samples) {
    titles.insert(s.first.question_title);
    titles.insert(s.second.question_title);
    codes.insert(s.first.code);
    codes.insert(s.second.code);
  }
  std::vector<Tokens> corpus(titles.begin(), titles.end());
  corpus.insert(corpus.end(), codes.begin(), codes.end());
  return Vocabulary::build(corpus, config.min_frequency, config.max_vocab);
}

}  // namespace

SelectorModel train_selector(const std::vector<PreferenceSample>& samples, const TrainConfig& config,
                             SelectorVariant variant, TrainLog* log,
                             const std::vector<PreferenceSample>* validation) {
  config.validate();
  if (samples.empty()) throw ConfigError("train_selector: no samples");
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) throw ConfigError("train_selector: labels must be 0 or 1");
  }
  SelectorModel model(selector_vocabulary(samples, config), config.shape, variant,
                      config.max_input_len, config.seed);
  auto& impl = model.impl();

  const bool frozen = config.freeze_encoder;
  if (frozen) {
    for (auto& p : impl.store->all()) {
      if (p.name.rfind("mlp.", 0) != 0) p.trainable = false;
    }
  }

  const std::vector<Item> items = make_items(model, samples);
  // Frozen encodings never change, so each distinct input is encoded once.
  std::map<std::vector<int>, Matrix> cache;
  if (frozen) {
    for (const auto& it : items) {
      for (const auto* ids : {&it.first, &it.second}) {
        if (!ids->empty() && !cache.contains(*ids)) cache.emplace(*ids, impl.encode_value(*ids));
      }
    }
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.clip_norm = config.clip_norm;
  adam_cfg.warmup_steps = config.warmup_steps;
  nn::Adam adam(*impl.store, adam_cfg);

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(mix_seed(config.seed ^ 0x5eedULL, static_cast<std::uint64_t>(epoch)));
    Rng* drop = config.dropout > 0.0f ? &dropout_rng : nullptr;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      impl.store->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const Item& it = items[order[i]];
        Graph g(true);
        auto enc = [&](const std::vector<int>& ids) {
          return frozen ? g.constant(cache.at(ids)) : impl.encode(g, ids, config.dropout, drop);
        };
        Var joint = enc(it.first);
        if (!it.second.empty()) joint = g.concat_cols(joint, enc(it.second));
        Var logit = impl.head(g, joint);
        Var loss = g.bce_with_logits(logit, it.label);
        const double l = g.value(loss)(0, 0);
        batch_loss += l;
        loss_sum += l;
        if ((g.value(logit)(0, 0) > 0.0f) == (it.label > 0.5f)) ++correct;
        g.backward(loss, 1.0f / static_cast<float>(end - start));
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("train_selector: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting " + std::to_string(start) + " (loss " +
                            std::to_string(batch_loss) + ")");
      }
      const double norm = adam.step();
      if (!std::isfinite(norm)) {
        throw TrainingError("train_selector: non-finite gradient at epoch " + std::to_string(epoch));
      }
    }
    if (log) {
      const double n = static_cast<double>(items.size());
      const double val = validation && !validation->empty() ? pairwise_accuracy(model, *validation) : -1.0;
      log->epochs.push_back({epoch + 1, loss_sum / n, static_cast<double>(correct) / n, val});
    }
  }
  for (auto& p : impl.store->all()) p.trainable = true;
  return model;
}

double pairwise_accuracy(const SelectorModel& model, const std::vector<PreferenceSample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const double p = model.preference_score(s.first, s.second);
    if ((p > 0.5) == (s.label == 1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

SnippetRanking rank_snippets(const SelectorModel& model, const Tokens& query,
                             const std::vector<QCPair>& candidates) {
  return order_candidates(query, candidates, model.candidate_scores(candidates));
}

SnippetsByQuestion group_by_question(const std::vector<QuestionSnippet>& snippets) {
  SnippetsByQuestion out;
  for (const auto& s : snippets) out[s.question_id].push_back(s);
  for (auto& [qid, list] : out) {
    std::sort(list.begin(), list.end(),
              [](const QuestionSnippet& a, const QuestionSnippet& b) { return a.snippet_id < b.snippet_id; });
  }
  return out;
}

std::vector<QCPair> gather_candidates(const RankedQuestions& ranked, const SnippetsByQuestion& snippets,
                                      const Tokens& query) {
  std::vector<QCPair> out;
  for (const auto& q : ranked.ranked) {
    const auto it = snippets.find(q.id);
    if (it == snippets.end()) continue;
    for (const auto& s : it->second) {
      out.push_back({query, s.code, s.role, s.question_id, s.snippet_id, s.question_id});
    }
  }
  return out;
}

}  // namespace snipsearch
