#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snipsearch/common.hpp"

namespace snipsearch::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

/// Owns named parameters with stable addresses. Save/load uses a little-endian
/// binary blob: magic, count, then (name, rows, cols, float32 data) records.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void save(const std::string& path) const;
  // Loads values into already-created parameters; shapes and names must match.
  void load(const std::string& path);

 private:
  std::deque<Parameter> params_;
};

// Initializers
void init_xavier(Parameter& p, Rng& rng);
void init_normal(Parameter& p, Rng& rng, float stddev);
void init_constant(Parameter& p, float value);

struct Var {
  int id = -1;
};

/// Define-by-run computation graph. Values are computed eagerly; when grad is
/// enabled each op records a backward closure. backward() accumulates into the
/// `grad` of every trainable Parameter that took part.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }

  Var matmul(Var a, Var b);
  // x * W + b with b broadcast over rows.
  Var linear(Var x, Parameter& weight, Parameter& bias);
  Var add(Var a, Var b);
  Var relu(Var a);
  Var layer_norm(Var x, Parameter& gamma, Parameter& beta, float eps = 1e-5f);
  // Multi-head scaled dot-product attention over projected inputs.
  // q: Tq x d, k and v: Tk x d. Output Tq x d.
  Var attention(Var q, Var k, Var v, int heads, bool causal);
  // Rows of `table` selected by ids, times `scale`.
  Var embedding(Parameter& table, std::span<const int> ids, float scale = 1.0f);
  Var mean_rows(Var x);
  Var row(Var x, Eigen::Index index);
  Var concat_cols(Var a, Var b);
  Var dropout(Var x, float rate, Rng& rng);
  // Mean token cross entropy of softmax(logits) against targets.
  Var cross_entropy(Var logits, std::span<const int> targets);
  // Binary cross entropy on a 1x1 logit.
  Var bce_with_logits(Var logit, float label);

  void backward(Var loss, float seed = 1.0f);

  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Graph&, int)> backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Matrix value, bool requires_grad);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Matrix& grad_of(int id);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

/// Adam with optional linear warmup and global-norm gradient clipping.
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int warmup_steps = 0;
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  // Applies one update from the accumulated grads, scaled by `grad_scale`.
  // Returns the pre-clipping global gradient norm.
  double step(float grad_scale = 1.0f);

 private:
  ParameterStore& store_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long step_count_ = 0;
};

}  // namespace snipsearch::nn
