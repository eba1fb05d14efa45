#pragma once

#include <string>
#include <vector>

#include "snipsearch/jsonl.hpp"
#include "snipsearch/nn.hpp"

namespace snipsearch {

struct ModelShape {
  int d_model = 128;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int d_ff = 512;

  Json to_json() const;
  static ModelShape from_json(const Json& j);
  void validate() const;
};

namespace nn {

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);
  Var operator()(Graph& g, Var x) const { return g.linear(x, *weight_, *bias_); }

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(ParameterStore& store, const std::string& name, int width);
  Var operator()(Graph& g, Var x) const { return g.layer_norm(x, *gamma_, *beta_); }

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterStore& store, const std::string& name, int width, int heads, Rng& rng);
  Var operator()(Graph& g, Var query_in, Var memory, bool causal) const;

 private:
  LinearLayer q_, k_, v_, o_;
  int heads_ = 1;
};

class FeedForwardBlock {
 public:
  FeedForwardBlock() = default;
  FeedForwardBlock(ParameterStore& store, const std::string& name, int width, int hidden, Rng& rng);
  Var operator()(Graph& g, Var x) const { return out_(g, g.relu(in_(g, x))); }

 private:
  LinearLayer in_, out_;
};

/// Pre-norm self-attention stack with a final layer norm. Each layer is
/// x + Attn(LN(x)) followed by x + FF(LN(x)).
class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(ParameterStore& store, const std::string& name, int width, int layers, int heads,
               int hidden, Rng& rng);
  Var operator()(Graph& g, Var x, float dropout = 0.0f, Rng* rng = nullptr) const;

 private:
  struct Layer {
    LayerNormLayer ln_attn, ln_ff;
    AttentionBlock attn;
    FeedForwardBlock ff;
  };
  std::vector<Layer> layers_;
  LayerNormLayer final_;
};

/// Pre-norm decoder: causal self-attention, cross-attention over the encoder
/// memory, feed-forward; final layer norm.
class DecoderStack {
 public:
  DecoderStack() = default;
  DecoderStack(ParameterStore& store, const std::string& name, int width, int layers, int heads,
               int hidden, Rng& rng);
  Var operator()(Graph& g, Var y, Var memory, float dropout = 0.0f, Rng* rng = nullptr) const;

 private:
  struct Layer {
    LayerNormLayer ln_self, ln_cross, ln_ff;
    AttentionBlock self_attn, cross_attn;
    FeedForwardBlock ff;
  };
  std::vector<Layer> layers_;
  LayerNormLayer final_;
};

/// Fixed sinusoidal position table, rows x width.
const Matrix& sinusoidal_positions(int rows, int width);

}  // namespace nn
}  // namespace snipsearch
