#include "snipsearch/transformer.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace snipsearch {

Json ModelShape::to_json() const {
  Json j;
  j["d_model"] = d_model;
  j["encoder_layers"] = encoder_layers;
  j["decoder_layers"] = decoder_layers;
  j["heads"] = heads;
  j["d_ff"] = d_ff;
  return j;
}

ModelShape ModelShape::from_json(const Json& j) {
  ModelShape s;
  s.d_model = j.value("d_model", s.d_model);
  s.encoder_layers = j.value("encoder_layers", s.encoder_layers);
  s.decoder_layers = j.value("decoder_layers", s.decoder_layers);
  s.heads = j.value("heads", s.heads);
  s.d_ff = j.value("d_ff", s.d_ff);
  s.validate();
  return s;
}

void ModelShape::validate() const {
  if (d_model <= 0 || heads <= 0 || d_ff <= 0 || encoder_layers < 0 || decoder_layers < 0) {
    throw ConfigError("model shape values must be positive");
  }
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
}

namespace nn {

LinearLayer::LinearLayer(ParameterStore& store, const std::string& name, int in, int out, Rng& rng)
    : weight_(&store.create(name + ".w", in, out)), bias_(&store.create(name + ".b", 1, out)) {
  init_xavier(*weight_, rng);
}

LayerNormLayer::LayerNormLayer(ParameterStore& store, const std::string& name, int width)
    : gamma_(&store.create(name + ".gamma", 1, width)), beta_(&store.create(name + ".beta", 1, width)) {
  init_constant(*gamma_, 1.0f);
}

AttentionBlock::AttentionBlock(ParameterStore& store, const std::string& name, int width, int heads,
                               Rng& rng)
    : q_(store, name + ".q", width, width, rng),
      k_(store, name + ".k", width, width, rng),
      v_(store, name + ".v", width, width, rng),
      o_(store, name + ".o", width, width, rng),
      heads_(heads) {}

Var AttentionBlock::operator()(Graph& g, Var query_in, Var memory, bool causal) const {
  Var q = q_(g, query_in);
  Var k = k_(g, memory);
  Var v = v_(g, memory);
  return o_(g, g.attention(q, k, v, heads_, causal));
}

FeedForwardBlock::FeedForwardBlock(ParameterStore& store, const std::string& name, int width,
                                   int hidden, Rng& rng)
    : in_(store, name + ".in", width, hidden, rng), out_(store, name + ".out", hidden, width, rng) {}

EncoderStack::EncoderStack(ParameterStore& store, const std::string& name, int width, int layers,
                           int heads, int hidden, Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    layers_.push_back({LayerNormLayer(store, p + ".ln_attn", width),
                       LayerNormLayer(store, p + ".ln_ff", width),
                       AttentionBlock(store, p + ".attn", width, heads, rng),
                       FeedForwardBlock(store, p + ".ff", width, hidden, rng)});
  }
  final_ = LayerNormLayer(store, name + ".ln_final", width);
}

Var EncoderStack::operator()(Graph& g, Var x, float dropout, Rng* rng) const {
  for (const auto& layer : layers_) {
    Var h = layer.ln_attn(g, x);
    Var a = layer.attn(g, h, h, false);
    if (rng) a = g.dropout(a, dropout, *rng);
    x = g.add(x, a);
    Var f = layer.ff(g, layer.ln_ff(g, x));
    if (rng) f = g.dropout(f, dropout, *rng);
    x = g.add(x, f);
  }
  return final_(g, x);
}

DecoderStack::DecoderStack(ParameterStore& store, const std::string& name, int width, int layers,
                           int heads, int hidden, Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    layers_.push_back({LayerNormLayer(store, p + ".ln_self", width),
                       LayerNormLayer(store, p + ".ln_cross", width),
                       LayerNormLayer(store, p + ".ln_ff", width),
                       AttentionBlock(store, p + ".self", width, heads, rng),
                       AttentionBlock(store, p + ".cross", width, heads, rng),
                       FeedForwardBlock(store, p + ".ff", width, hidden, rng)});
  }
  final_ = LayerNormLayer(store, name + ".ln_final", width);
}

Var DecoderStack::operator()(Graph& g, Var y, Var memory, float dropout, Rng* rng) const {
  for (const auto& layer : layers_) {
    Var h = layer.ln_self(g, y);
    Var a = layer.self_attn(g, h, h, true);
    if (rng) a = g.dropout(a, dropout, *rng);
    y = g.add(y, a);
    Var c = layer.cross_attn(g, layer.ln_cross(g, y), memory, false);
    if (rng) c = g.dropout(c, dropout, *rng);
    y = g.add(y, c);
    Var f = layer.ff(g, layer.ln_ff(g, y));
    if (rng) f = g.dropout(f, dropout, *rng);
    y = g.add(y, f);
  }
  return final_(g, y);
}

const Matrix& sinusoidal_positions(int rows, int width) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, Matrix> cache;
  std::lock_guard lock(mu);
  auto it = cache.find({rows, width});
  if (it != cache.end()) return it->second;
  Matrix pe(rows, width);
  for (int pos = 0; pos < rows; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / width);
      pe(pos, i) = static_cast<float>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  }
  return cache.emplace(std::make_pair(rows, width), std::move(pe)).first->second;
}

}  // namespace nn
}  // namespace snipsearch
