#pragma once

// A 1D CNN over the 12-feature vector: `depth` same-padded conv layers with
// 2^r * q filters, global average pooling, one dense layer, softmax.
// Trained with mean softmax cross-entropy, Adam, and plateau LR decay.

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <type_traits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#if defined(__SSE__)
#include <xmmintrin.h>
#endif
#include <json.hpp>

#include "vibesense/core.hpp"
#include "vibesense/dataset.hpp"
#include "vibesense/features.hpp"

namespace vibesense::cnn {

enum class Activation { ReLU, ELU, Tanh, Sigmoid };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "ReLU";
    case Activation::ELU: return "ELU";
    case Activation::Tanh: return "Tanh";
    case Activation::Sigmoid: return "Sigmoid";
  }
  return "?";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
  for (auto a : {Activation::ReLU, Activation::ELU, Activation::Tanh, Activation::Sigmoid}) {
    std::string lower(activation_name(a));
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == activation_name(a) || s == lower) return a;
  }
  return std::nullopt;
}

/// x for x > 0, alpha (e^x - 1) otherwise.
template <typename T>
T elu(T x, T alpha = T(1)) {
  return x > T(0) ? x : alpha * std::expm1(x);
}

struct CnnHyperparams {
  std::size_t batch_size = 100;
  std::size_t kernel_length = 3;
  std::size_t base_filters = 32;
  Activation activation = Activation::ELU;
  double elu_alpha = 1.0;
  double lr0 = 1e-2;
  double decay_factor = 0.8;
  std::size_t patience = 10;
  std::size_t epochs = 1000;
  std::size_t depth = 5;
  std::size_t stride = 1;
  std::size_t num_classes = kNumClasses;
  std::size_t input_length = kNumFeatures;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (kernel_length < 1) throw ConfigError("kernel_length must be >= 1");
    if (base_filters < 1) throw ConfigError("base_filters must be >= 1");
    if (depth < 1 || depth > 16) throw ConfigError("depth must be in [1, 16]");
    if (stride != 1) throw ConfigError("only stride 1 is supported");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input_length < 1) throw ConfigError("input_length must be >= 1");
    if (!(elu_alpha > 0.0)) throw ConfigError("elu_alpha must be > 0");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay_factor must be in (0, 1]");
  }

  std::size_t filters_at(std::size_t layer) const { return base_filters << layer; }

  bool operator==(const CnnHyperparams&) const = default;
};

struct LayerShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const LayerShape&) const = default;
};

/// Output size of every stage, in the "rows x cols" form of the architecture table.
inline std::vector<LayerShape> shape_trace(const CnnHyperparams& hp) {
  hp.validate();
  const std::string act(activation_name(hp.activation));
  std::vector<LayerShape> out;
  out.push_back({"Input", 1, hp.input_length});
  for (std::size_t r = 0; r < hp.depth; ++r) {
    out.push_back({"Conv1D & " + act, hp.input_length, hp.filters_at(r)});
  }
  out.push_back({"GlobalAveragePooling1D", 1, hp.filters_at(hp.depth - 1)});
  out.push_back({"Dense", 1, hp.num_classes});
  return out;
}

template <typename Scalar>
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::vector<Scalar> weight;  // [kernel][in][out]
  std::vector<Scalar> bias;    // [out]

  Scalar& w(std::size_t k, std::size_t ci, std::size_t co) {
    return weight[(k * in_channels + ci) * out_channels + co];
  }
  Scalar w(std::size_t k, std::size_t ci, std::size_t co) const {
    return weight[(k * in_channels + ci) * out_channels + co];
  }
};

template <typename Scalar>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<Scalar> weight;  // [in][out]
  std::vector<Scalar> bias;    // [out]
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
};

template <typename Scalar>
struct CnnModel {
  CnnHyperparams hp;
  std::vector<ConvLayer<Scalar>> conv;
  DenseLayer<Scalar> dense;
  // Input standardization applied before the first layer.
  std::vector<double> input_mean;
  std::vector<double> input_std;
  std::vector<EpochRecord> history;

  /// Zero weights, identity input scaling.
  static CnnModel zeros(const CnnHyperparams& hp) {
    hp.validate();
    CnnModel m;
    m.hp = hp;
    std::size_t in = 1;
    for (std::size_t r = 0; r < hp.depth; ++r) {
      ConvLayer<Scalar> layer;
      layer.in_channels = in;
      layer.out_channels = hp.filters_at(r);
      layer.kernel = hp.kernel_length;
      layer.weight.assign(layer.kernel * layer.in_channels * layer.out_channels, Scalar(0));
      layer.bias.assign(layer.out_channels, Scalar(0));
      in = layer.out_channels;
      m.conv.push_back(std::move(layer));
    }
    m.dense.in = in;
    m.dense.out = hp.num_classes;
    m.dense.weight.assign(in * hp.num_classes, Scalar(0));
    m.dense.bias.assign(hp.num_classes, Scalar(0));
    m.input_mean.assign(hp.input_length, 0.0);
    m.input_std.assign(hp.input_length, 1.0);
    return m;
  }

  /// Fan-in scaled uniform init, U(-sqrt(3/fan_in), sqrt(3/fan_in)); zero biases.
  static CnnModel init(const CnnHyperparams& hp, std::uint64_t seed) {
    CnnModel m = zeros(hp);
    std::mt19937_64 rng(seed);
    for (auto& layer : m.conv) {
      const double limit = std::sqrt(3.0 / static_cast<double>(layer.kernel * layer.in_channels));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : layer.weight) v = static_cast<Scalar>(u(rng));
    }
    const double limit = std::sqrt(3.0 / static_cast<double>(m.dense.in));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : m.dense.weight) v = static_cast<Scalar>(u(rng));
    return m;
  }

  /// Every parameter tensor, conv layers first (weight then bias), dense last.
  std::vector<std::span<Scalar>> parameters() {
    std::vector<std::span<Scalar>> out;
    for (auto& l : conv) {
      out.emplace_back(l.weight);
      out.emplace_back(l.bias);
    }
    out.emplace_back(dense.weight);
    out.emplace_back(dense.bias);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = dense.weight.size() + dense.bias.size();
    for (const auto& l : conv) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Standardize with training statistics; a constant column keeps scale 1.
  void fit_input_scaling(const Matrix& x) {
    if (x.empty()) return;
    const std::size_t d = hp.input_length;
    const auto n = static_cast<double>(x.size());
    input_mean.assign(d, 0.0);
    input_std.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (const auto& r : x) m += r[j];
      m /= n;
      double v = 0.0;
      for (const auto& r : x) v += (r[j] - m) * (r[j] - m);
      const double s = std::sqrt(v / n);
      input_mean[j] = m;
      input_std[j] = s > 0.0 && std::isfinite(s) ? s : 1.0;
    }
  }
};

/// Gradients share the parameter layout of a model.
template <typename Scalar>
struct Gradients {
  std::vector<std::vector<Scalar>> conv_weight;
  std::vector<std::vector<Scalar>> conv_bias;
  std::vector<Scalar> dense_weight;
  std::vector<Scalar> dense_bias;

  static Gradients like(const CnnModel<Scalar>& m) {
    Gradients g;
    for (const auto& l : m.conv) {
      g.conv_weight.emplace_back(l.weight.size(), Scalar(0));
      g.conv_bias.emplace_back(l.bias.size(), Scalar(0));
    }
    g.dense_weight.assign(m.dense.weight.size(), Scalar(0));
    g.dense_bias.assign(m.dense.bias.size(), Scalar(0));
    return g;
  }

  void zero() {
    for (auto& v : conv_weight) std::fill(v.begin(), v.end(), Scalar(0));
    for (auto& v : conv_bias) std::fill(v.begin(), v.end(), Scalar(0));
    std::fill(dense_weight.begin(), dense_weight.end(), Scalar(0));
    std::fill(dense_bias.begin(), dense_bias.end(), Scalar(0));
  }

  /// Same order as CnnModel::parameters().
  std::vector<std::span<Scalar>> tensors() {
    std::vector<std::span<Scalar>> out;
    for (std::size_t i = 0; i < conv_weight.size(); ++i) {
      out.emplace_back(conv_weight[i]);
      out.emplace_back(conv_bias[i]);
    }
    out.emplace_back(dense_weight);
    out.emplace_back(dense_bias);
    return out;
  }
};

// --- forward / backward --------------------------------------------------------

namespace detail {

template <typename Scalar>
inline Scalar activate(Activation a, Scalar z, Scalar alpha) {
  switch (a) {
    case Activation::ReLU: return z > Scalar(0) ? z : Scalar(0);
    case Activation::ELU: return elu(z, alpha);
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return Scalar(1) / (Scalar(1) + std::exp(-z));
  }
  return z;
}

/// Derivative expressed through the pre-activation z and output a. ELU uses
/// the positive-branch slope 1 at z = 0.
template <typename Scalar>
inline Scalar activate_grad(Activation act, Scalar z, Scalar a, Scalar alpha) {
  switch (act) {
    case Activation::ReLU: return z > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::ELU: return z >= Scalar(0) ? Scalar(1) : a + alpha;
    case Activation::Tanh: return Scalar(1) - a * a;
    case Activation::Sigmoid: return a * (Scalar(1) - a);
  }
  return Scalar(1);
}

inline std::size_t pad_left(std::size_t kernel) { return (kernel - 1) / 2; }

template <typename Scalar>
using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Map = Eigen::Map<RowMajor<Scalar>>;
template <typename Scalar>
using ConstMap = Eigen::Map<const RowMajor<Scalar>>;

/// (n*L) x (K*C) patch matrix: row (i, l), column (k, c) holds x[i][l + k - pl][c]
/// or zero outside the sequence.
template <typename Scalar>
void im2col(const std::vector<Scalar>& x, std::size_t n, std::size_t L, std::size_t C, std::size_t K,
            std::size_t pl, std::vector<Scalar>& cols) {
  cols.assign(n * L * K * C, Scalar(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < L; ++l) {
      Scalar* row = cols.data() + (i * L + l) * K * C;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(l + k) - static_cast<std::ptrdiff_t>(pl);
        if (p < 0 || p >= static_cast<std::ptrdiff_t>(L)) continue;
        const Scalar* src = x.data() + (i * L + static_cast<std::size_t>(p)) * C;
        std::copy(src, src + C, row + k * C);
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds patch gradients back onto the sequence.
template <typename Scalar>
void col2im(const std::vector<Scalar>& cols, std::size_t n, std::size_t L, std::size_t C, std::size_t K,
            std::size_t pl, std::vector<Scalar>& dx) {
  dx.assign(n * L * C, Scalar(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < L; ++l) {
      const Scalar* row = cols.data() + (i * L + l) * K * C;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(l + k) - static_cast<std::ptrdiff_t>(pl);
        if (p < 0 || p >= static_cast<std::ptrdiff_t>(L)) continue;
        Scalar* dst = dx.data() + (i * L + static_cast<std::size_t>(p)) * C;
        const Scalar* src = row + k * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
      }
    }
  }
}

}  // namespace detail

/// Activations of one batch. Per layer r: pre[r] and post[r] are
/// n x L x C_r (sample-major, then position, then channel).
template <typename Scalar>
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<Scalar> input;               // n x L (standardized)
  std::vector<std::vector<Scalar>> pre;    // per conv layer
  std::vector<std::vector<Scalar>> post;   // per conv layer
  std::vector<Scalar> pooled;              // n x C_last
  std::vector<Scalar> logits;              // n x N
  std::vector<Scalar> probs;               // n x N

  /// rows x cols of each stage for sample 0, as in shape_trace().
  std::vector<LayerShape> shapes(const CnnHyperparams& hp) const {
    std::vector<LayerShape> out;
    const std::size_t L = hp.input_length;
    out.push_back({"Input", 1, input.size() / std::max<std::size_t>(batch, 1)});
    const std::string act(activation_name(hp.activation));
    for (const auto& p : post) out.push_back({"Conv1D & " + act, L, p.size() / batch / L});
    out.push_back({"GlobalAveragePooling1D", 1, pooled.size() / batch});
    out.push_back({"Dense", 1, probs.size() / batch});
    return out;
  }
};

/// Row-major n x input_length batch, raw feature values.
template <typename Scalar>
ForwardCache<Scalar> forward(const CnnModel<Scalar>& model, std::span<const double> batch, std::size_t n) {
  const auto& hp = model.hp;
  const std::size_t L = hp.input_length;
  if (n == 0 || batch.size() != n * L) {
    throw ShapeError("forward: expected batch of n x " + std::to_string(L) + " values, got " +
                     std::to_string(batch.size()) + " for n = " + std::to_string(n));
  }
  ForwardCache<Scalar> c;
  c.batch = n;
  c.input.resize(n * L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const double v = batch[i * L + j];
      if (!std::isfinite(v)) throw InvalidSignalError("forward: non-finite input");
      c.input[i * L + j] = static_cast<Scalar>((v - model.input_mean[j]) / model.input_std[j]);
    }
  }
  const auto alpha = static_cast<Scalar>(hp.elu_alpha);
  const std::size_t pl = detail::pad_left(hp.kernel_length);

  c.pre.resize(model.conv.size());
  c.post.resize(model.conv.size());
  std::vector<Scalar> c_cols;
  for (std::size_t r = 0; r < model.conv.size(); ++r) {
    const auto& layer = model.conv[r];
    const std::size_t ci_n = layer.in_channels;
    const std::size_t co_n = layer.out_channels;
    const std::vector<Scalar>& in = r == 0 ? c.input : c.post[r - 1];
    auto& pre = c.pre[r];
    auto& post = c.post[r];
    pre.resize(n * L * co_n);
    post.resize(n * L * co_n);
    detail::im2col(in, n, L, ci_n, layer.kernel, pl, c_cols);
    const std::size_t rows = n * L;
    const std::size_t kc = layer.kernel * ci_n;
    detail::ConstMap<Scalar> a(c_cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(kc));
    detail::ConstMap<Scalar> w(layer.weight.data(), static_cast<Eigen::Index>(kc), static_cast<Eigen::Index>(co_n));
    detail::Map<Scalar> z(pre.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(co_n));
    z.noalias() = a * w;
    z.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(layer.bias.data(),
                                                                               static_cast<Eigen::Index>(co_n));
    for (std::size_t t = 0; t < pre.size(); ++t) post[t] = detail::activate(hp.activation, pre[t], alpha);
  }

  const std::size_t C = model.dense.in;
  const std::size_t N = model.dense.out;
  c.pooled.assign(n * C, Scalar(0));
  const auto& last = c.post.back();
  for (std::size_t i = 0; i < n; ++i) {
    Scalar* g = c.pooled.data() + i * C;
    for (std::size_t l = 0; l < L; ++l) {
      const Scalar* a = last.data() + (i * L + l) * C;
      for (std::size_t ch = 0; ch < C; ++ch) g[ch] += a[ch];
    }
    for (std::size_t ch = 0; ch < C; ++ch) g[ch] /= static_cast<Scalar>(L);
  }

  c.logits.assign(n * N, Scalar(0));
  c.probs.resize(n * N);
  for (std::size_t i = 0; i < n; ++i) {
    Scalar* y = c.logits.data() + i * N;
    for (std::size_t o = 0; o < N; ++o) y[o] = model.dense.bias[o];
    const Scalar* g = c.pooled.data() + i * C;
    for (std::size_t ch = 0; ch < C; ++ch) {
      const Scalar* wrow = model.dense.weight.data() + ch * N;
      for (std::size_t o = 0; o < N; ++o) y[o] += g[ch] * wrow[o];
    }
    const Scalar mx = *std::max_element(y, y + N);
    Scalar sum(0);
    Scalar* p = c.probs.data() + i * N;
    for (std::size_t o = 0; o < N; ++o) {
      p[o] = std::exp(y[o] - mx);
      sum += p[o];
    }
    for (std::size_t o = 0; o < N; ++o) p[o] /= sum;
  }
  return c;
}

/// Mean cross-entropy of the cached batch against integer labels.
template <typename Scalar>
double cross_entropy(const ForwardCache<Scalar>& c, std::span<const int> labels) {
  const std::size_t N = c.logits.size() / c.batch;
  double total = 0.0;
  for (std::size_t i = 0; i < c.batch; ++i) {
    const Scalar* y = c.logits.data() + i * N;
    const double mx = static_cast<double>(*std::max_element(y, y + N));
    double sum = 0.0;
    for (std::size_t o = 0; o < N; ++o) sum += std::exp(static_cast<double>(y[o]) - mx);
    total += mx + std::log(sum) - static_cast<double>(y[labels[i]]);
  }
  return total / static_cast<double>(c.batch);
}

/// Reusable scratch for backward().
template <typename Scalar>
struct BackwardScratch {
  std::vector<Scalar> d_post;
  std::vector<Scalar> d_pre;
  std::vector<Scalar> d_in;
  std::vector<Scalar> cols;
  std::vector<Scalar> d_cols;
};

/// Gradients of the mean cross-entropy over the batch, written into `grads`
/// (overwritten, not accumulated).
template <typename Scalar>
void backward(const CnnModel<Scalar>& model, const ForwardCache<Scalar>& c, std::span<const int> labels,
              Gradients<Scalar>& grads, BackwardScratch<Scalar>& scratch) {
  const auto& hp = model.hp;
  const std::size_t n = c.batch;
  const std::size_t L = hp.input_length;
  const std::size_t C = model.dense.in;
  const std::size_t N = model.dense.out;
  if (labels.size() != n) throw ShapeError("backward: label count does not match batch");
  grads.zero();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  const auto alpha = static_cast<Scalar>(hp.elu_alpha);
  const std::size_t pl = detail::pad_left(hp.kernel_length);

  // Softmax + cross-entropy: dlogit = (p - onehot) / n. Dense and GAP backward.
  auto& d_post = scratch.d_post;
  d_post.assign(n * L * C, Scalar(0));
  std::vector<Scalar> dlogit(N);
  std::vector<Scalar> dpool(C);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar* p = c.probs.data() + i * N;
    const auto yi = static_cast<std::size_t>(labels[i]);
    if (yi >= N) throw ShapeError("backward: label out of range");
    for (std::size_t o = 0; o < N; ++o) dlogit[o] = (p[o] - (o == yi ? Scalar(1) : Scalar(0))) * inv_n;
    const Scalar* g = c.pooled.data() + i * C;
    for (std::size_t o = 0; o < N; ++o) grads.dense_bias[o] += dlogit[o];
    for (std::size_t ch = 0; ch < C; ++ch) {
      Scalar* gw = grads.dense_weight.data() + ch * N;
      const Scalar* w = model.dense.weight.data() + ch * N;
      Scalar acc(0);
      for (std::size_t o = 0; o < N; ++o) {
        gw[o] += g[ch] * dlogit[o];
        acc += w[o] * dlogit[o];
      }
      dpool[ch] = acc / static_cast<Scalar>(L);
    }
    for (std::size_t l = 0; l < L; ++l) {
      Scalar* d = d_post.data() + (i * L + l) * C;
      for (std::size_t ch = 0; ch < C; ++ch) d[ch] = dpool[ch];
    }
  }

  for (std::size_t rr = model.conv.size(); rr-- > 0;) {
    const auto& layer = model.conv[rr];
    const std::size_t ci_n = layer.in_channels;
    const std::size_t co_n = layer.out_channels;
    const std::vector<Scalar>& in = rr == 0 ? c.input : c.post[rr - 1];
    const auto& pre = c.pre[rr];
    const auto& post = c.post[rr];

    auto& d_pre = scratch.d_pre;
    d_pre.resize(n * L * co_n);
    for (std::size_t t = 0; t < d_pre.size(); ++t) {
      d_pre[t] = d_post[t] * detail::activate_grad(hp.activation, pre[t], post[t], alpha);
    }

    auto& gw = grads.conv_weight[rr];
    auto& gb = grads.conv_bias[rr];
    const bool need_input_grad = rr > 0;
    const std::size_t rows = n * L;
    const std::size_t kc = layer.kernel * ci_n;
    const auto er = static_cast<Eigen::Index>(rows);
    const auto ekc = static_cast<Eigen::Index>(kc);
    const auto eco = static_cast<Eigen::Index>(co_n);
    detail::im2col(in, n, L, ci_n, layer.kernel, pl, scratch.cols);
    detail::ConstMap<Scalar> a(scratch.cols.data(), er, ekc);
    detail::ConstMap<Scalar> dz(d_pre.data(), er, eco);
    detail::Map<Scalar>(gw.data(), ekc, eco).noalias() = a.transpose() * dz;
    // Plain row-order sum: Eigen's colwise().sum() reassociates by address alignment.
    std::fill(gb.begin(), gb.end(), Scalar(0));
    for (std::size_t t = 0; t < rows; ++t) {
      const Scalar* row = d_pre.data() + t * co_n;
      for (std::size_t o = 0; o < co_n; ++o) gb[o] += row[o];
    }
    if (need_input_grad) {
      scratch.d_cols.resize(rows * kc);
      detail::Map<Scalar> dcols(scratch.d_cols.data(), er, ekc);
      dcols.noalias() = dz * detail::ConstMap<Scalar>(layer.weight.data(), ekc, eco).transpose();
      detail::col2im(scratch.d_cols, n, L, ci_n, layer.kernel, pl, scratch.d_in);
      std::swap(d_post, scratch.d_in);
    }
  }
}

template <typename Scalar>
Gradients<Scalar> backward(const CnnModel<Scalar>& model, const ForwardCache<Scalar>& c,
                           std::span<const int> labels) {
  auto g = Gradients<Scalar>::like(model);
  BackwardScratch<Scalar> scratch;
  backward(model, c, labels, g, scratch);
  return g;
}

// --- optimizer and schedule ----------------------------------------------------

/// Bias-corrected Adam over a list of parameter tensors.
template <typename Scalar>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const std::vector<std::span<Scalar>>& params) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  void step(std::vector<std::span<Scalar>> params, std::vector<std::span<Scalar>> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ShapeError("adam: parameter list does not match optimizer state");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      auto p = params[k];
      auto g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] = static_cast<Scalar>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

 private:
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// Multiplies the learning rate by `factor` whenever the best-so-far
/// validation accuracy has not improved for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, std::size_t patience)
      : lr_(lr0), factor_(factor), patience_(patience) {}

  double lr() const { return lr_; }
  std::size_t decays() const { return decays_; }
  double best() const { return best_; }

  /// Feed one epoch's validation accuracy; returns the LR for the next epoch.
  double step(double val_accuracy) {
    if (val_accuracy > best_) {
      best_ = val_accuracy;
      wait_ = 0;
    } else if (++wait_ >= patience_) {
      lr_ *= factor_;
      ++decays_;
      wait_ = 0;
    }
    return lr();
  }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t wait_ = 0;
  std::size_t decays_ = 0;
};

// --- prediction ------------------------------------------------------------------

struct PredictionResult {
  std::vector<double> probabilities;
  int argmax = 0;
};

template <typename Scalar>
std::vector<PredictionResult> predict_batch(const CnnModel<Scalar>& model, const Matrix& x) {
  std::vector<PredictionResult> out;
  if (x.empty()) return out;
  const std::size_t L = model.hp.input_length;
  const std::size_t chunk = 256;
  std::vector<double> flat;
  for (std::size_t start = 0; start < x.size(); start += chunk) {
    const std::size_t n = std::min(chunk, x.size() - start);
    flat.assign(n * L, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (x[start + i].size() != L) throw ShapeError("predict: row width must be " + std::to_string(L));
      std::copy(x[start + i].begin(), x[start + i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * L));
    }
    const auto c = forward(model, flat, n);
    const std::size_t N = model.dense.out;
    for (std::size_t i = 0; i < n; ++i) {
      PredictionResult r;
      r.probabilities.assign(c.probs.begin() + static_cast<std::ptrdiff_t>(i * N),
                             c.probs.begin() + static_cast<std::ptrdiff_t>((i + 1) * N));
      r.argmax = static_cast<int>(std::max_element(r.probabilities.begin(), r.probabilities.end()) -
                                  r.probabilities.begin());
      out.push_back(std::move(r));
    }
  }
  return out;
}

template <typename Scalar>
PredictionResult predict(const CnnModel<Scalar>& model, const FeatureVector& f) {
  const auto a = f.to_array();
  return predict_batch(model, Matrix{std::vector<double>(a.begin(), a.end())}).front();
}

template <typename Scalar>
double accuracy(const CnnModel<Scalar>& model, const Matrix& x, const std::vector<int>& y) {
  if (x.empty()) return 0.0;
  const auto preds = predict_batch(model, x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i].argmax == y[i];
  return static_cast<double>(hit) / static_cast<double>(x.size());
}

// --- training ----------------------------------------------------------------------

namespace detail {

/// Flush denormals to zero for the guard's lifetime. ELU tails otherwise
/// produce subnormal activations that slow every later epoch several-fold.
class DenormalGuard {
 public:
  DenormalGuard() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~DenormalGuard() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace detail

struct TrainOptions {
  /// Restore the weights from the epoch with the best validation accuracy.
  bool keep_best = false;
  /// Called after every epoch; return false to stop early.
  std::function<bool(const EpochRecord&)> on_epoch;
};

template <typename Scalar = double>
CnnModel<Scalar> train(const Matrix& train_x, const std::vector<int>& train_y, const Matrix& val_x,
                       const std::vector<int>& val_y, const CnnHyperparams& hp, std::uint64_t seed,
                       const TrainOptions& opts = {}) {
  hp.validate();
  if (train_x.empty()) throw InsufficientDataError("train: empty training set");
  if (train_x.size() != train_y.size() || val_x.size() != val_y.size()) {
    throw ConfigError("train: rows/labels length mismatch");
  }
  for (const auto& r : train_x) {
    if (r.size() != hp.input_length) throw ShapeError("train: row width must be " + std::to_string(hp.input_length));
  }

  const detail::DenormalGuard ftz;
  std::mt19937_64 rng(seed);
  auto model = CnnModel<Scalar>::init(hp, rng());
  model.fit_input_scaling(train_x);

  Adam<Scalar> adam(model.parameters());
  PlateauScheduler sched(hp.lr0, hp.decay_factor, hp.patience);
  auto grads = Gradients<Scalar>::like(model);
  BackwardScratch<Scalar> scratch;

  const std::size_t L = hp.input_length;
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> flat;
  std::vector<int> labels;
  CnnModel<Scalar> best = model;
  double best_val = -1.0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const double lr = sched.lr();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t n = std::min(hp.batch_size, order.size() - start);
      flat.resize(n * L);
      labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& row = train_x[order[start + i]];
        std::copy(row.begin(), row.end(), flat.begin() + static_cast<std::ptrdiff_t>(i * L));
        labels[i] = train_y[order[start + i]];
      }
      const auto cache = forward(model, flat, n);
      const double loss = cross_entropy(cache, labels);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(n);
      const std::size_t N = hp.num_classes;
      for (std::size_t i = 0; i < n; ++i) {
        const auto* p = cache.probs.data() + i * N;
        correct += static_cast<int>(std::max_element(p, p + N) - p) == labels[i];
      }
      backward(model, cache, labels, grads, scratch);
      adam.step(model.parameters(), grads.tensors(), lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_accuracy = val_x.empty() ? rec.train_accuracy : accuracy(model, val_x, val_y);
    rec.lr = lr;
    model.history.push_back(rec);
    sched.step(rec.val_accuracy);

    if (opts.keep_best && rec.val_accuracy > best_val) {
      best_val = rec.val_accuracy;
      best = model;
    }
    if (opts.on_epoch && !opts.on_epoch(rec)) break;
  }
  if (opts.keep_best) {
    best.history = model.history;
    return best;
  }
  return model;
}

/// Splits `ds` 0.7 / 0.1 / 0.2 (stratified) and trains on the first part with
/// the second as validation. The test indices are returned through `test_idx`.
template <typename Scalar = double>
CnnModel<Scalar> train(const LabeledDataset& ds, const CnnHyperparams& hp, std::uint64_t seed,
                       std::vector<std::size_t>* test_idx = nullptr, const TrainOptions& opts = {}) {
  const auto parts = split(ds, {0.7, 0.1, 0.2}, seed, true);
  if (test_idx) *test_idx = parts[2];
  const auto tr = ds.subset(parts[0]);
  const auto va = ds.subset(parts[1]);
  return train<Scalar>(project(tr, kAllFeatures), label_indices(tr), project(va, kAllFeatures),
                       label_indices(va), hp, seed ^ 0x9e3779b97f4a7c15ULL, opts);
}

// --- grid search ---------------------------------------------------------------------

struct HyperGrid {
  std::vector<std::size_t> batch_sizes{50, 100, 200, 400};
  std::vector<std::size_t> kernel_lengths{1, 2, 3, 4};
  std::vector<std::size_t> base_filters{4, 8, 16, 32};
  std::vector<Activation> activations{Activation::ReLU, Activation::ELU, Activation::Tanh,
                                      Activation::Sigmoid};

  static HyperGrid full() { return {}; }

  /// 2 x 2 x 2 x 2 sub-grid around the chosen configuration.
  static HyperGrid reduced() {
    return {{50, 100}, {2, 3}, {4, 8}, {Activation::ReLU, Activation::ELU}};
  }

  std::size_t size() const {
    return batch_sizes.size() * kernel_lengths.size() * base_filters.size() * activations.size();
  }

  /// Every value must come from the full grid.
  void validate() const {
    const auto full_grid = full();
    auto check = [](const auto& sub, const auto& all, const char* what) {
      if (sub.empty()) throw ConfigError(std::string("grid: no values for ") + what);
      for (const auto& v : sub) {
        if (std::find(all.begin(), all.end(), v) == all.end()) {
          throw ConfigError(std::string("grid: value outside the allowed set for ") + what);
        }
      }
    };
    check(batch_sizes, full_grid.batch_sizes, "batch size");
    check(kernel_lengths, full_grid.kernel_lengths, "kernel length");
    check(base_filters, full_grid.base_filters, "filters");
    check(activations, full_grid.activations, "activation");
  }

  /// Combinations in lexicographic order (batch, kernel, filters, activation).
  std::vector<CnnHyperparams> combos(const CnnHyperparams& base = {}) const {
    std::vector<CnnHyperparams> out;
    for (auto b : batch_sizes)
      for (auto k : kernel_lengths)
        for (auto q : base_filters)
          for (auto a : activations) {
            auto hp = base;
            hp.batch_size = b;
            hp.kernel_length = k;
            hp.base_filters = q;
            hp.activation = a;
            out.push_back(hp);
          }
    return out;
  }
};

struct ComboResult {
  CnnHyperparams hp;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridSearchResult {
  std::vector<ComboResult> combos;    // grid order
  std::vector<std::size_t> ranking;   // indices into combos, best first
  std::size_t winner = 0;

  const CnnHyperparams& best() const { return combos[winner].hp; }

  /// (hyperparameter, value, combo mean accuracy) samples for density plots.
  struct Marginal {
    std::string parameter;
    std::string value;
    double accuracy = 0.0;
  };

  std::vector<Marginal> marginals() const {
    std::vector<Marginal> out;
    for (const auto& c : combos) {
      out.push_back({"batch_size", std::to_string(c.hp.batch_size), c.mean_accuracy});
      out.push_back({"kernel_length", std::to_string(c.hp.kernel_length), c.mean_accuracy});
      out.push_back({"base_filters", std::to_string(c.hp.base_filters), c.mean_accuracy});
      out.push_back({"activation", std::string(activation_name(c.hp.activation)), c.mean_accuracy});
    }
    return out;
  }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Scores every combination with `evaluate(hp, fold, combo_seed) -> accuracy`
/// over `folds` folds. Winner is the best mean; ties go to the earlier combo.
template <typename Evaluate>
GridSearchResult grid_search(const std::vector<CnnHyperparams>& combos, std::size_t folds,
                             std::uint64_t seed, Evaluate&& evaluate) {
  if (combos.empty()) throw ConfigError("grid_search: no combinations");
  if (folds < 1) throw ConfigError("grid_search: folds must be >= 1");
  GridSearchResult res;
  for (std::size_t c = 0; c < combos.size(); ++c) {
    ComboResult cr;
    cr.hp = combos[c];
    const auto combo_seed = derive_seed(seed, c);
    for (std::size_t f = 0; f < folds; ++f) cr.fold_accuracy.push_back(evaluate(combos[c], f, combo_seed));
    cr.mean_accuracy = std::accumulate(cr.fold_accuracy.begin(), cr.fold_accuracy.end(), 0.0) /
                       static_cast<double>(folds);
    res.combos.push_back(std::move(cr));
  }
  res.ranking.resize(res.combos.size());
  std::iota(res.ranking.begin(), res.ranking.end(), 0);
  std::stable_sort(res.ranking.begin(), res.ranking.end(), [&](std::size_t a, std::size_t b) {
    return res.combos[a].mean_accuracy > res.combos[b].mean_accuracy;
  });
  res.winner = res.ranking.front();
  return res;
}

/// k-fold CV of the CNN itself: train on k-1 folds, validate on the held-out one.
template <typename Scalar = float>
GridSearchResult grid_search(const LabeledDataset& ds, const HyperGrid& grid, const CnnHyperparams& base,
                             std::size_t folds, std::uint64_t seed) {
  grid.validate();
  ds.validate();
  const auto x = project(ds, kAllFeatures);
  const auto y = label_indices(ds);
  const auto fold_idx = kfold(y, folds, seed);
  auto eval = [&](const CnnHyperparams& hp, std::size_t f, std::uint64_t combo_seed) {
    const auto tr = complement(fold_idx, f);
    Matrix tx, vx;
    std::vector<int> ty, vy;
    for (auto i : tr) {
      tx.push_back(x[i]);
      ty.push_back(y[i]);
    }
    for (auto i : fold_idx[f]) {
      vx.push_back(x[i]);
      vy.push_back(y[i]);
    }
    const auto model = train<Scalar>(tx, ty, vx, vy, hp, derive_seed(combo_seed, f));
    return model.history.empty() ? 0.0 : model.history.back().val_accuracy;
  };
  return grid_search(grid.combos(base), folds, seed, eval);
}

// --- checkpoint ------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

template <typename Scalar>
constexpr std::string_view scalar_name() {
  if constexpr (std::is_same_v<Scalar, float>) return "float32";
  else return "float64";
}

template <typename Scalar>
nlohmann::ordered_json to_json(const CnnModel<Scalar>& m) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "vibesense-cnn";
  j["version"] = kCheckpointVersion;
  j["scalar"] = scalar_name<Scalar>();
  const auto& hp = m.hp;
  j["hyperparams"] = {{"batch_size", hp.batch_size},   {"kernel_length", hp.kernel_length},
                      {"base_filters", hp.base_filters}, {"activation", activation_name(hp.activation)},
                      {"elu_alpha", hp.elu_alpha},     {"lr0", hp.lr0},
                      {"decay_factor", hp.decay_factor}, {"patience", hp.patience},
                      {"epochs", hp.epochs},           {"depth", hp.depth},
                      {"stride", hp.stride},           {"num_classes", hp.num_classes},
                      {"input_length", hp.input_length}};
  j["input_mean"] = m.input_mean;
  j["input_std"] = m.input_std;
  auto to_doubles = [](const std::vector<Scalar>& v) { return std::vector<double>(v.begin(), v.end()); };
  ordered_json layers = ordered_json::array();
  for (const auto& l : m.conv) {
    layers.push_back({{"type", "conv1d"},
                      {"shape", {l.kernel, l.in_channels, l.out_channels}},
                      {"weight", to_doubles(l.weight)},
                      {"bias", to_doubles(l.bias)}});
  }
  layers.push_back({{"type", "dense"},
                    {"shape", {m.dense.in, m.dense.out}},
                    {"weight", to_doubles(m.dense.weight)},
                    {"bias", to_doubles(m.dense.bias)}});
  j["layers"] = layers;
  ordered_json hist = ordered_json::array();
  for (const auto& e : m.history) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"val_accuracy", e.val_accuracy},
                    {"lr", e.lr}});
  }
  j["history"] = hist;
  return j;
}

template <typename Scalar>
CnnModel<Scalar> from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "vibesense-cnn") throw SchemaError("checkpoint: unknown format");
    if (j.at("version").get<int>() != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version");
    if (j.at("scalar").get<std::string>() != scalar_name<Scalar>()) {
      throw SchemaError("checkpoint: stored precision differs from requested");
    }
    const auto& h = j.at("hyperparams");
    CnnHyperparams hp;
    hp.batch_size = h.at("batch_size");
    hp.kernel_length = h.at("kernel_length");
    hp.base_filters = h.at("base_filters");
    auto act = parse_activation(h.at("activation").get<std::string>());
    if (!act) throw SchemaError("checkpoint: unknown activation");
    hp.activation = *act;
    hp.elu_alpha = h.at("elu_alpha");
    hp.lr0 = h.at("lr0");
    hp.decay_factor = h.at("decay_factor");
    hp.patience = h.at("patience");
    hp.epochs = h.at("epochs");
    hp.depth = h.at("depth");
    hp.stride = h.at("stride");
    hp.num_classes = h.at("num_classes");
    hp.input_length = h.at("input_length");
    auto m = CnnModel<Scalar>::zeros(hp);
    m.input_mean = j.at("input_mean").get<std::vector<double>>();
    m.input_std = j.at("input_std").get<std::vector<double>>();
    if (m.input_mean.size() != hp.input_length || m.input_std.size() != hp.input_length) {
      throw SchemaError("checkpoint: input scaling has wrong width");
    }
    const auto& layers = j.at("layers");
    if (layers.size() != hp.depth + 1) throw SchemaError("checkpoint: layer count does not match depth");
    auto load = [](const nlohmann::json& src, std::vector<Scalar>& dst, const char* what) {
      const auto v = src.get<std::vector<double>>();
      if (v.size() != dst.size()) throw SchemaError(std::string("checkpoint: wrong size for ") + what);
      for (std::size_t i = 0; i < v.size(); ++i) dst[i] = static_cast<Scalar>(v[i]);
    };
    for (std::size_t r = 0; r < hp.depth; ++r) {
      load(layers[r].at("weight"), m.conv[r].weight, "conv weight");
      load(layers[r].at("bias"), m.conv[r].bias, "conv bias");
    }
    load(layers[hp.depth].at("weight"), m.dense.weight, "dense weight");
    load(layers[hp.depth].at("bias"), m.dense.bias, "dense bias");
    for (const auto& e : j.at("history")) {
      m.history.push_back({e.at("epoch"), e.at("train_loss"), e.at("train_accuracy"), e.at("val_accuracy"),
                           e.at("lr")});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const CnnModel<Scalar>& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << to_json(m).dump() << '\n';
  if (!os) throw IoError("write failed: " + path);
}

template <typename Scalar>
CnnModel<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return from_json<Scalar>(j);
}

}  // namespace vibesense::cnn
