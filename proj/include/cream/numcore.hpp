/*
 * Copyright 2026 The CREAM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense numeric kernel: matrices, masked affine layers with analytic
// gradients, activations, fused logit losses, Adam and a seeded generator.
// Everything is 64-bit and single-threaded per call.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cream {

// Error taxonomy shared by every module.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw ConfigError("ragged matrix rows");
      std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + r * m.cols_);
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  std::size_t count_nonzero() const {
    return static_cast<std::size_t>(
        std::count_if(data_.begin(), data_.end(), [](double v) { return v != 0.0; }));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Boolean product of two 0/1 matrices: out(i,j) = OR_k a(i,k) AND b(k,j).
inline Matrix boolean_product(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ConfigError("boolean_product: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      if (a(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j)
        if (b(k, j) != 0.0) out(i, j) = 1.0;
    }
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// SplitMix64 finalizer; used to derive independent per-unit seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), engine_);
    return p;
  }

  Rng derive(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Masked affine layer: y = (W ⊙ M) x + b. W is kept at exactly zero wherever
// M is zero, so the Hadamard product never has to be materialized.

struct AffineGrad {
  Matrix weights;
  Vector bias;

  void zero() {
    std::fill(weights.data().begin(), weights.data().end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
  }
  void scale(double s) {
    for (double& w : weights.data()) w *= s;
    for (double& b : bias) b *= s;
  }
};

struct MaskedAffine {
  Matrix weights;
  Vector bias;
  Matrix mask;

  MaskedAffine() = default;
  explicit MaskedAffine(Matrix mask_)
      : weights(mask_.rows(), mask_.cols()), bias(mask_.rows(), 0.0), mask(std::move(mask_)) {}

  static MaskedAffine dense(std::size_t in, std::size_t out) {
    return MaskedAffine(Matrix(out, in, 1.0));
  }

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  AffineGrad zero_grad() const { return {Matrix(out_dim(), in_dim()), Vector(out_dim(), 0.0)}; }

  // Glorot-uniform bound computed from the unmasked connection count only.
  void init(Rng& rng) {
    const double nnz = static_cast<double>(mask.count_nonzero());
    if (nnz > 0.0) {
      const double fan_in = nnz / static_cast<double>(out_dim());
      const double fan_out = nnz / static_cast<double>(in_dim());
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (std::size_t i = 0; i < weights.rows(); ++i)
        for (std::size_t j = 0; j < weights.cols(); ++j)
          weights(i, j) = mask(i, j) != 0.0 ? rng.uniform(-bound, bound) : 0.0;
    }
    std::fill(bias.begin(), bias.end(), 0.0);
  }

  void apply_mask() {
    for (std::size_t k = 0; k < weights.data().size(); ++k)
      if (mask.data()[k] == 0.0) weights.data()[k] = 0.0;
  }

  Vector forward(std::span<const double> input) const {
    if (input.size() != in_dim())
      throw ConfigError("masked_affine_forward: input length " + std::to_string(input.size()) +
                        " != layer input width " + std::to_string(in_dim()));
    Vector out(bias);
    for (std::size_t i = 0; i < out_dim(); ++i) {
      const auto w = weights.row(i);
      const auto m = mask.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j)
        if (m[j] != 0.0) acc += w[j] * input[j];
      out[i] += acc;
    }
    return out;
  }

  // Accumulates parameter gradients into `grad` and returns dL/dinput.
  Vector backward(std::span<const double> input, std::span<const double> dout,
                  AffineGrad& grad) const {
    Vector din(in_dim(), 0.0);
    for (std::size_t i = 0; i < out_dim(); ++i) {
      const double g = dout[i];
      grad.bias[i] += g;
      if (g == 0.0) continue;
      const auto w = weights.row(i);
      const auto m = mask.row(i);
      auto gw = grad.weights.row(i);
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (m[j] == 0.0) continue;
        gw[j] += g * input[j];
        din[j] += g * w[j];
      }
    }
    return din;
  }
};

inline Vector masked_affine_forward(const MaskedAffine& layer, std::span<const double> input) {
  return layer.forward(input);
}

enum class Activation { identity, relu };

inline double activate(Activation a, double x) {
  return a == Activation::relu ? (x > 0.0 ? x : 0.0) : x;
}
inline double activate_grad(Activation a, double pre) {
  return a == Activation::relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

// A stack of masked affine layers with `hidden` activation between layers and
// `output` activation after the last one.
class MaskedMlp {
 public:
  struct Trace {
    std::vector<Vector> inputs;  // input to each layer
    std::vector<Vector> pre;     // pre-activation of each layer
    Vector output;
    bool valid = false;
  };

  MaskedMlp() = default;
  MaskedMlp(std::vector<Matrix> masks, Activation hidden, Activation output)
      : hidden_(hidden), output_(output) {
    for (auto& m : masks) layers_.emplace_back(std::move(m));
    for (std::size_t i = 1; i < layers_.size(); ++i)
      if (layers_[i].in_dim() != layers_[i - 1].out_dim())
        throw ConfigError("MaskedMlp: consecutive mask shapes do not chain");
  }

  std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::vector<MaskedAffine>& layers() { return layers_; }
  const std::vector<MaskedAffine>& layers() const { return layers_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  void init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  Vector forward(std::span<const double> input, Trace* trace = nullptr) const {
    Vector x(input.begin(), input.end());
    if (trace) {
      trace->inputs.clear();
      trace->pre.clear();
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Vector pre = layers_[i].forward(x);
      const Activation a = (i + 1 == layers_.size()) ? output_ : hidden_;
      Vector post(pre.size());
      for (std::size_t k = 0; k < pre.size(); ++k) post[k] = activate(a, pre[k]);
      if (trace) {
        trace->inputs.push_back(std::move(x));
        trace->pre.push_back(std::move(pre));
      }
      x = std::move(post);
    }
    if (trace) {
      trace->output = x;
      trace->valid = true;
    }
    return x;
  }

  // grads must hold one AffineGrad per layer; gradients are accumulated.
  Vector backward(const Trace& trace, std::span<const double> dout,
                  std::span<AffineGrad> grads) const {
    if (!trace.valid || trace.inputs.size() != layers_.size())
      throw UsageError("backward called without a matching forward trace");
    if (grads.size() != layers_.size()) throw UsageError("backward: gradient slot count mismatch");
    Vector g(dout.begin(), dout.end());
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Activation a = (i + 1 == layers_.size()) ? output_ : hidden_;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= activate_grad(a, trace.pre[i][k]);
      g = layers_[i].backward(trace.inputs[i], g, grads[i]);
    }
    return g;
  }

  std::vector<AffineGrad> zero_grads() const {
    std::vector<AffineGrad> g;
    for (const auto& l : layers_) g.push_back(l.zero_grad());
    return g;
  }

 private:
  std::vector<MaskedAffine> layers_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Matrix m_weights, v_weights;
  Vector m_bias, v_bias;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const MaskedAffine& layer, AdamConfig cfg)
      : config(cfg),
        m_weights(layer.out_dim(), layer.in_dim()),
        v_weights(layer.out_dim(), layer.in_dim()),
        m_bias(layer.out_dim(), 0.0),
        v_bias(layer.out_dim(), 0.0) {}
};

inline void adam_step(MaskedAffine& layer, const AffineGrad& grad, AdamState& state) {
  if (grad.weights.rows() != layer.out_dim() || grad.weights.cols() != layer.in_dim() ||
      grad.bias.size() != layer.out_dim() || state.m_bias.size() != layer.out_dim())
    throw ConfigError("adam_step: parameter/gradient shape mismatch");
  if (!all_finite(grad.weights.data()) || !all_finite(grad.bias))
    throw TrainingError("adam_step: non-finite gradient");

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](double& p, double g, double& m, double& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / corr1;
    const double v_hat = v / corr2;
    p -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  };

  auto& w = layer.weights.data();
  const auto& mask = layer.mask.data();
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (mask[k] == 0.0) {
      w[k] = 0.0;
      continue;
    }
    update(w[k], grad.weights.data()[k], state.m_weights.data()[k], state.v_weights.data()[k]);
  }
  for (std::size_t i = 0; i < layer.bias.size(); ++i)
    update(layer.bias[i], grad.bias[i], state.m_bias[i], state.v_bias[i]);
}

// ---------------------------------------------------------------------------
// Activations

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (out[i] = std::exp(logits[i] - mx));
  for (double& o : out) o /= s;
  return out;
}

using Groups = std::vector<std::vector<std::size_t>>;

// Throws unless groups are disjoint, in range and of size >= 2.
inline void validate_groups(const Groups& groups, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (const auto& g : groups) {
    if (g.size() < 2) throw ConfigError("mutex group must have at least 2 members");
    for (std::size_t i : g) {
      if (i >= n) throw ConfigError("mutex group index out of range");
      if (seen[i]) throw ConfigError("mutex groups overlap at index " + std::to_string(i));
      seen[i] = 1;
    }
  }
}

// Softmax within each group, independent sigmoid for every other index.
inline Vector softmax_over_groups(std::span<const double> logits, const Groups& groups) {
  validate_groups(groups, logits.size());
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
  for (const auto& g : groups) {
    Vector sub;
    for (std::size_t i : g) sub.push_back(logits[i]);
    const Vector s = softmax(sub);
    for (std::size_t k = 0; k < g.size(); ++k) out[g[k]] = s[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses. Both consume logits and return the loss plus dL/dlogits.

struct LossResult {
  double value = 0.0;
  Vector grad;
};

inline LossResult task_cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw DataError("task target index out of range");
  LossResult r;
  r.value = log_sum_exp(logits) - logits[target];
  r.grad = softmax(logits);
  r.grad[target] -= 1.0;
  return r;
}

// Categorical cross-entropy per mutex group, binary cross-entropy elsewhere.
inline LossResult grouped_concept_loss(std::span<const double> logits,
                                       std::span<const double> targets, const Groups& groups) {
  if (targets.size() != logits.size()) throw DataError("concept target length mismatch");
  for (double t : targets)
    if (t != 0.0 && t != 1.0) throw DataError("concept target outside {0,1}");
  LossResult r;
  r.grad.assign(logits.size(), 0.0);
  std::vector<char> grouped(logits.size(), 0);
  for (const auto& g : groups) {
    Vector sub;
    for (std::size_t i : g) {
      sub.push_back(logits[i]);
      grouped[i] = 1;
    }
    const Vector p = softmax(sub);
    const double lse = log_sum_exp(sub);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = targets[g[k]];
      r.value += t * (lse - sub[k]);
      r.grad[g[k]] = p[k] - t;
    }
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (grouped[i]) continue;
    const double l = logits[i];
    const double t = targets[i];
    r.value += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
    r.grad[i] = sigmoid(l) - t;
  }
  return r;
}

inline constexpr double kProbabilityFloor = 1e-12;

// Cross-entropy on probabilities, clamped for metric paths.
inline double clamped_cross_entropy(std::span<const double> probs, std::size_t target) {
  return -std::log(std::max(probs[target], kProbabilityFloor));
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace cream
