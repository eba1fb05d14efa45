#include "snipsearch/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace snipsearch::nn {

Parameter& ParameterStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (contains(name)) throw ModelError("duplicate parameter " + name);
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  return p;
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ModelError("unknown parameter " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ModelError("unknown parameter " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

namespace {
constexpr char kMagic[4] = {'S', 'N', 'P', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ModelError("parameter blob truncated");
  return v;
}
}  // namespace

void ParameterStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot write " + path);
  out.write(kMagic, 4);
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(out, static_cast<std::int64_t>(p.value.rows()));
    put(out, static_cast<std::int64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw ModelError("write failed for " + path);
}

void ParameterStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ModelError(path + ": not a parameter blob");
  if (take<std::uint32_t>(in) != kFormatVersion) throw ModelError(path + ": unsupported version");
  const auto count = take<std::uint32_t>(in);
  if (count != params_.size()) {
    throw ModelError(path + ": expected " + std::to_string(params_.size()) + " parameters, found " +
                     std::to_string(count));
  }
  for (auto& p : params_) {
    const auto len = take<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = take<std::int64_t>(in);
    const auto cols = take<std::int64_t>(in);
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw ModelError(path + ": parameter mismatch at " + p.name);
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!in) throw ModelError(path + ": truncated data for " + p.name);
  }
}

void init_xavier(Parameter& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = static_cast<float>((2.0 * rng.uniform_real() - 1.0) * limit);
  }
}

void init_normal(Parameter& p, Rng& rng, float stddev) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = static_cast<float>(rng.normal() * stddev);
  }
}

void init_constant(Parameter& p, float value) { p.value.setConstant(value); }

// ---------------------------------------------------------------------------

Var Graph::push(Matrix value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::param(Parameter& p) {
  Var v = push(p.value, p.trainable);
  nodes_[v.id].param = &p;
  return v;
}

Var Graph::matmul(Var a, Var b) {
  Var out = push(value(a) * value(b), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [a, b](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      if (g.needs(a)) g.grad_of(a.id).noalias() += G * g.value(b).transpose();
      if (g.needs(b)) g.grad_of(b.id).noalias() += g.value(a).transpose() * G;
    };
  }
  return out;
}

Var Graph::linear(Var x, Parameter& weight, Parameter& bias) {
  Matrix y = value(x) * weight.value;
  y.rowwise() += bias.value.row(0);
  const bool trainable = weight.trainable || bias.trainable;
  Var out = push(std::move(y), needs(x) || trainable);
  if (needs(out)) {
    nodes_[out.id].backward = [x, &weight, &bias](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      if (weight.trainable) weight.grad.noalias() += g.value(x).transpose() * G;
      if (bias.trainable) bias.grad.row(0) += G.colwise().sum();
      if (g.needs(x)) g.grad_of(x.id).noalias() += G * weight.value.transpose();
    };
  }
  return out;
}

Var Graph::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ModelError("add: shape mismatch");
  }
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [a, b](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      if (g.needs(a)) g.grad_of(a.id) += G;
      if (g.needs(b)) g.grad_of(b.id) += G;
    };
  }
  return out;
}

Var Graph::relu(Var a) {
  Var out = push(value(a).cwiseMax(0.0f), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [a](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      g.grad_of(a.id) += (g.value(a).array() > 0.0f).select(G, 0.0f);
    };
  }
  return out;
}

Var Graph::layer_norm(Var x, Parameter& gamma, Parameter& beta, float eps) {
  const Matrix& X = value(x);
  const Eigen::Index rows = X.rows();
  const Eigen::Index cols = X.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXf inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float mean = X.row(r).mean();
    const float var = (X.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0f / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  Var out = push(std::move(y), needs(x) || gamma.trainable || beta.trainable);
  if (needs(out)) {
    nodes_[out.id].backward = [x, &gamma, &beta, xhat = std::move(xhat),
                               inv_std = std::move(inv_std)](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      if (gamma.trainable) gamma.grad.row(0) += (G.array() * xhat.array()).colwise().sum().matrix();
      if (beta.trainable) beta.grad.row(0) += G.colwise().sum();
      if (!g.needs(x)) return;
      Matrix& dx = g.grad_of(x.id);
      const float n = static_cast<float>(G.cols());
      for (Eigen::Index r = 0; r < G.rows(); ++r) {
        Eigen::RowVectorXf dxhat = G.row(r).array() * gamma.value.row(0).array();
        const float sum_d = dxhat.sum();
        const float sum_dx = dxhat.dot(xhat.row(r));
        dx.row(r).array() +=
            (inv_std(r) / n) * (n * dxhat.array() - sum_d - xhat.row(r).array() * sum_dx);
      }
    };
  }
  return out;
}

Var Graph::attention(Var q, Var k, Var v, int heads, bool causal) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  const Eigen::Index d = Q.cols();
  if (d % heads != 0) throw ModelError("attention: model width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Eigen::Index tq = Q.rows();
  const Eigen::Index tk = K.rows();
  const Eigen::Index offset = tk - tq;  // causal: query i sees keys <= i + offset

  Matrix out(tq, d);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix s = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index visible = causal ? std::min(tk, i + offset + 1) : tk;
      auto row = s.row(i);
      const float mx = row.head(visible).maxCoeff();
      float sum = 0.0f;
      for (Eigen::Index j = 0; j < tk; ++j) {
        const float e = j < visible ? std::exp(row(j) - mx) : 0.0f;
        row(j) = e;
        sum += e;
      }
      row /= sum;
    }
    out.middleCols(h * dh, dh).noalias() = s * V.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Var result = push(std::move(out), needs(q) || needs(k) || needs(v));
  if (needs(result)) {
    nodes_[result.id].backward = [q, k, v, heads, dh, scale,
                                  probs = std::move(probs)](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      const Matrix& Q = g.value(q);
      const Matrix& K = g.value(k);
      const Matrix& V = g.value(v);
      Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
      Matrix dk = Matrix::Zero(K.rows(), K.cols());
      Matrix dv = Matrix::Zero(V.rows(), V.cols());
      for (int h = 0; h < heads; ++h) {
        const Matrix& P = probs[static_cast<std::size_t>(h)];
        auto Gh = G.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() += P.transpose() * Gh;
        Matrix dp = Gh * V.middleCols(h * dh, dh).transpose();
        Eigen::VectorXf rowdot = (dp.array() * P.array()).rowwise().sum();
        Matrix ds = (P.array() * (dp.array().colwise() - rowdot.array())).matrix() * scale;
        dq.middleCols(h * dh, dh).noalias() += ds * K.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() += ds.transpose() * Q.middleCols(h * dh, dh);
      }
      if (g.needs(q)) g.grad_of(q.id) += dq;
      if (g.needs(k)) g.grad_of(k.id) += dk;
      if (g.needs(v)) g.grad_of(v.id) += dv;
    };
  }
  return result;
}

Var Graph::embedding(Parameter& table, std::span<const int> ids, float scale) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) throw ModelError("embedding id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]) * scale;
  }
  Var result = push(std::move(out), table.trainable);
  if (needs(result)) {
    std::vector<int> kept(ids.begin(), ids.end());
    nodes_[result.id].backward = [&table, kept = std::move(kept), scale](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        table.grad.row(kept[i]) += G.row(static_cast<Eigen::Index>(i)) * scale;
      }
    };
  }
  return result;
}

Var Graph::mean_rows(Var x) {
  Var out = push(value(x).colwise().mean(), needs(x));
  if (needs(out)) {
    nodes_[out.id].backward = [x](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      Matrix& dx = g.grad_of(x.id);
      dx.rowwise() += G.row(0) / static_cast<float>(dx.rows());
    };
  }
  return out;
}

Var Graph::row(Var x, Eigen::Index index) {
  Var out = push(value(x).row(index), needs(x));
  if (needs(out)) {
    nodes_[out.id].backward = [x, index](Graph& g, int self) {
      g.grad_of(x.id).row(index) += g.nodes_[self].grad.row(0);
    };
  }
  return out;
}

Var Graph::concat_cols(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.rows() != B.rows()) throw ModelError("concat_cols: row mismatch");
  Matrix out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Eigen::Index split = A.cols();
  Var result = push(std::move(out), needs(a) || needs(b));
  if (needs(result)) {
    nodes_[result.id].backward = [a, b, split](Graph& g, int self) {
      const Matrix& G = g.nodes_[self].grad;
      if (g.needs(a)) g.grad_of(a.id) += G.leftCols(split);
      if (g.needs(b)) g.grad_of(b.id) += G.rightCols(G.cols() - split);
    };
  }
  return result;
}

Var Graph::dropout(Var x, float rate, Rng& rng) {
  if (rate <= 0.0f || !grad_enabled_) return x;
  const Matrix& X = value(x);
  Matrix mask(X.rows(), X.cols());
  const float keep = 1.0f / (1.0f - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform_real() < rate ? 0.0f : keep;
  }
  Var out = push(X.cwiseProduct(mask), needs(x));
  if (needs(out)) {
    nodes_[out.id].backward = [x, mask = std::move(mask)](Graph& g, int self) {
      g.grad_of(x.id) += g.nodes_[self].grad.cwiseProduct(mask);
    };
  }
  return out;
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& L = value(logits);
  if (static_cast<std::size_t>(L.rows()) != targets.size()) {
    throw ModelError("cross_entropy: target count mismatch");
  }
  Matrix probs(L.rows(), L.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const float mx = L.row(r).maxCoeff();
    probs.row(r) = (L.row(r).array() - mx).exp();
    const float sum = probs.row(r).sum();
    probs.row(r) /= sum;
    const int t = targets[static_cast<std::size_t>(r)];
    loss -= static_cast<double>(L(r, t) - mx - std::log(sum));
  }
  const float n = static_cast<float>(L.rows());
  Matrix value_out(1, 1);
  value_out(0, 0) = static_cast<float>(loss / n);
  Var out = push(std::move(value_out), needs(logits));
  if (needs(out)) {
    std::vector<int> kept(targets.begin(), targets.end());
    nodes_[out.id].backward = [logits, probs = std::move(probs), kept = std::move(kept),
                               n](Graph& g, int self) {
      const float G = g.nodes_[self].grad(0, 0);
      Matrix& dl = g.grad_of(logits.id);
      dl += probs * (G / n);
      for (std::size_t r = 0; r < kept.size(); ++r) {
        dl(static_cast<Eigen::Index>(r), kept[r]) -= G / n;
      }
    };
  }
  return out;
}

Var Graph::bce_with_logits(Var logit, float label) {
  const float z = value(logit)(0, 0);
  Matrix loss(1, 1);
  loss(0, 0) = std::max(z, 0.0f) - z * label + std::log1p(std::exp(-std::abs(z)));
  Var out = push(std::move(loss), needs(logit));
  if (needs(out)) {
    nodes_[out.id].backward = [logit, label, z](Graph& g, int self) {
      const float sig = 1.0f / (1.0f + std::exp(-z));
      g.grad_of(logit.id)(0, 0) += (sig - label) * g.nodes_[self].grad(0, 0);
    };
  }
  return out;
}

void Graph::backward(Var loss, float seed) {
  if (!grad_enabled_) throw ModelError("backward on a graph without grad");
  if (!needs(loss)) return;
  grad_of(loss.id).setConstant(seed);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param && n.param->trainable) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(store), config_(config) {
  for (const auto& p : store_.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

double Adam::step(float grad_scale) {
  double sq = 0.0;
  for (const auto& p : store_.all()) {
    if (p.trainable) sq += static_cast<double>(p.grad.squaredNorm());
  }
  const double norm = std::sqrt(sq) * grad_scale;
  if (!std::isfinite(norm)) return norm;
  float scale = grad_scale;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) {
    scale = static_cast<float>(grad_scale * config_.clip_norm / norm);
  }
  ++step_count_;
  double lr = config_.learning_rate;
  if (config_.warmup_steps > 0 && step_count_ < config_.warmup_steps) {
    lr *= static_cast<double>(step_count_) / config_.warmup_steps;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  const float step_size = static_cast<float>(lr / bc1);
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(config_.epsilon);
  std::size_t i = 0;
  for (auto& p : store_.all()) {
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    ++i;
    if (!p.trainable) continue;
    m = b1 * m + (1.0f - b1) * scale * p.grad;
    v = b2 * v + (1.0f - b2) * (scale * p.grad).cwiseAbs2();
    p.value.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
  }
  return norm;
}

}  // namespace snipsearch::nn
