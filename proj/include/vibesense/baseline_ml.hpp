#pragma once

// k-NN and Gaussian naive Bayes baselines plus classification metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <vector>

#include "vibesense/core.hpp"
#include "vibesense/dataset.hpp"

namespace vibesense {

// --- metrics -----------------------------------------------------------------

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct Metrics {
  double accuracy = 0.0;
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  std::array<std::size_t, kNumClasses> support{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  ConfusionMatrix confusion{};  // [true][predicted]
  std::size_t total = 0;

  /// Row-stochastic confusion; rows without support stay zero.
  std::array<std::array<double, kNumClasses>, kNumClasses> normalized_confusion() const {
    std::array<std::array<double, kNumClasses>, kNumClasses> out{};
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      if (support[t] == 0) continue;
      for (std::size_t p = 0; p < kNumClasses; ++p) {
        out[t][p] = static_cast<double>(confusion[t][p]) / static_cast<double>(support[t]);
      }
    }
    return out;
  }
};

/// Precision/recall/F1 use 0 whenever their denominator is 0. Macro averages
/// run over classes that occur in either the labels or the predictions.
inline Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw ConfigError("evaluate: length mismatch");
  Metrics m;
  m.total = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i];
    const int p = predictions[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) {
      throw ConfigError("evaluate: class index out of range");
    }
    ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  std::array<std::size_t, kNumClasses> predicted{};
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    correct += m.confusion[t][t];
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      m.support[t] += m.confusion[t][p];
      predicted[p] += m.confusion[t][p];
    }
  }
  m.accuracy = m.total ? static_cast<double>(correct) / static_cast<double>(m.total) : 0.0;

  std::size_t present = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto tp = static_cast<double>(m.confusion[c][c]);
    m.precision[c] = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    m.recall[c] = m.support[c] ? tp / static_cast<double>(m.support[c]) : 0.0;
    const double denom = m.precision[c] + m.recall[c];
    m.f1[c] = denom > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / denom : 0.0;
    if (m.support[c] || predicted[c]) {
      ++present;
      m.macro_precision += m.precision[c];
      m.macro_recall += m.recall[c];
      m.macro_f1 += m.f1[c];
    }
  }
  if (present) {
    m.macro_precision /= static_cast<double>(present);
    m.macro_recall /= static_cast<double>(present);
    m.macro_f1 /= static_cast<double>(present);
  }
  return m;
}

inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
  os << "class,precision,recall,f1,support\n";
  for (auto c : kAllClasses) {
    const auto i = static_cast<std::size_t>(class_index(c));
    os << class_id(c) << ',' << format_double(m.precision[i]) << ',' << format_double(m.recall[i]) << ','
       << format_double(m.f1[i]) << ',' << m.support[i] << '\n';
  }
  os << "macro," << format_double(m.macro_precision) << ',' << format_double(m.macro_recall) << ','
     << format_double(m.macro_f1) << ',' << m.total << '\n';
  os << "accuracy," << format_double(m.accuracy) << ",,," << m.total << '\n';
}

// --- k-NN --------------------------------------------------------------------

/// k-NN over z-scored features. Distances are Euclidean in normalized space.
class KnnModel {
 public:
  static KnnModel fit(const Matrix& raw, std::vector<int> labels) {
    if (raw.empty()) throw InsufficientDataError("k-NN: empty training set");
    if (raw.size() != labels.size()) throw ConfigError("k-NN: rows/labels length mismatch");
    KnnModel m;
    m.norm_ = Normalizer::fit(raw, false);
    m.train_ = m.norm_.transform(raw);
    m.labels_ = std::move(labels);
    return m;
  }

  static KnnModel fit(const LabeledDataset& ds, const FeatureMask& mask) {
    ds.validate();
    return fit(project(ds, mask), label_indices(ds));
  }

  std::size_t size() const { return train_.size(); }
  const Normalizer& normalizer() const { return norm_; }

  /// Training rows ordered by (distance, row index).
  std::vector<std::size_t> neighbours(const std::vector<double>& raw_query) const {
    const auto q = norm_.transform(raw_query);
    std::vector<double> d2(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double diff = train_[i][j] - q[j];
        s += diff * diff;
      }
      d2[i] = s;
    }
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
    return order;
  }

  /// Majority vote over the first k entries of an ordered neighbour list;
  /// ties go to the smallest class index.
  int vote(const std::vector<std::size_t>& order, std::size_t k) const {
    std::array<std::size_t, kNumClasses> counts{};
    for (std::size_t i = 0; i < k; ++i) ++counts[static_cast<std::size_t>(labels_[order[i]])];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  int predict(const std::vector<double>& raw_query, std::size_t k) const {
    if (train_.empty()) throw InsufficientDataError("k-NN: empty training set");
    if (k < 1 || k > train_.size()) throw ConfigError("k-NN: k must be in [1, |train|]");
    return vote(neighbours(raw_query), k);
  }

 private:
  Normalizer norm_;
  Matrix train_;
  std::vector<int> labels_;
};

inline StructureClass knn_predict(const KnnModel& model, const FeatureVector& query,
                                  const FeatureMask& mask, std::size_t k) {
  return class_from_index(model.predict(project(query, mask), k));
}

struct KSweepResult {
  std::size_t best_k = 1;
  std::vector<double> accuracy;  // accuracy[k - k_min]
  std::size_t k_min = 1;
};

/// Mean k-fold CV accuracy for every k in [k_min, k_max]; best_k is the
/// argmax, ties to the smallest k. Folds are stratified and seeded.
inline KSweepResult sweep_k(const Matrix& raw, const std::vector<int>& labels, std::size_t k_min,
                            std::size_t k_max, std::size_t folds, std::uint64_t seed) {
  if (k_min < 1 || k_max < k_min) throw ConfigError("sweep_k: bad k range");
  const auto fold_idx = kfold(labels, folds, seed);
  KSweepResult res;
  res.k_min = k_min;
  res.accuracy.assign(k_max - k_min + 1, 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const auto train_idx = complement(fold_idx, f);
    if (train_idx.size() < k_max) throw InsufficientDataError("sweep_k: fold training set smaller than k_max");
    Matrix xt;
    std::vector<int> yt;
    for (auto i : train_idx) {
      xt.push_back(raw[i]);
      yt.push_back(labels[i]);
    }
    const auto model = KnnModel::fit(xt, yt);
    std::vector<std::size_t> hits(res.accuracy.size(), 0);
    for (auto i : fold_idx[f]) {
      const auto order = model.neighbours(raw[i]);
      for (std::size_t k = k_min; k <= k_max; ++k) {
        if (model.vote(order, k) == labels[i]) ++hits[k - k_min];
      }
    }
    for (std::size_t k = 0; k < hits.size(); ++k) {
      res.accuracy[k] += static_cast<double>(hits[k]) / static_cast<double>(fold_idx[f].size());
    }
  }
  for (auto& a : res.accuracy) a /= static_cast<double>(folds);
  const auto best = std::max_element(res.accuracy.begin(), res.accuracy.end());
  res.best_k = k_min + static_cast<std::size_t>(best - res.accuracy.begin());
  return res;
}

inline KSweepResult sweep_k(const LabeledDataset& ds, const FeatureMask& mask, std::size_t k_min = 1,
                            std::size_t k_max = 30, std::size_t folds = 10, std::uint64_t seed = 0) {
  ds.validate();
  return sweep_k(project(ds, mask), label_indices(ds), k_min, k_max, folds, seed);
}

// --- Gaussian naive Bayes ----------------------------------------------------

struct GaussianNB {
  static constexpr double kVarianceFloor = 1e-9;

  std::array<double, kNumClasses> log_prior{};
  std::array<std::vector<double>, kNumClasses> mean;
  std::array<std::vector<double>, kNumClasses> var;
  std::array<bool, kNumClasses> present{};

  static GaussianNB fit(const Matrix& x, const std::vector<int>& y) {
    if (x.empty() || x.size() != y.size()) throw ConfigError("gnb: bad training data");
    const std::size_t d = x.front().size();
    GaussianNB m;
    std::array<std::size_t, kNumClasses> count{};
    for (int c : y) ++count[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (count[c] == 0) {
        m.log_prior[c] = -std::numeric_limits<double>::infinity();
        continue;
      }
      if (count[c] < 2) {
        throw InsufficientDataError("gnb: class " + std::string(class_id(class_from_index(static_cast<int>(c)))) +
                                    " has fewer than 2 samples");
      }
      m.present[c] = true;
      m.log_prior[c] = std::log(static_cast<double>(count[c]) / static_cast<double>(y.size()));
      m.mean[c].assign(d, 0.0);
      m.var[c].assign(d, 0.0);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto c = static_cast<std::size_t>(y[i]);
      for (std::size_t j = 0; j < d; ++j) m.mean[c][j] += x[i][j];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!m.present[c]) continue;
      for (auto& v : m.mean[c]) v /= static_cast<double>(count[c]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto c = static_cast<std::size_t>(y[i]);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[i][j] - m.mean[c][j];
        m.var[c][j] += diff * diff;
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!m.present[c]) continue;
      for (auto& v : m.var[c]) v = v / static_cast<double>(count[c]) + kVarianceFloor;
    }
    return m;
  }

  /// Unnormalized log posterior: log prior + sum of Gaussian log densities.
  double log_posterior(const std::vector<double>& x, int cls) const {
    const auto c = static_cast<std::size_t>(cls);
    if (!present[c]) return -std::numeric_limits<double>::infinity();
    double s = log_prior[c];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - mean[c][j];
      s += -0.5 * std::log(2.0 * std::numbers::pi * var[c][j]) - diff * diff / (2.0 * var[c][j]);
    }
    return s;
  }

  int predict(const std::vector<double>& x) const {
    int best = -1;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumClasses; ++c) {
      if (!present[static_cast<std::size_t>(c)]) continue;
      const double lp = log_posterior(x, c);
      if (best < 0 || lp > best_lp) {
        best = c;
        best_lp = lp;
      }
    }
    return best;
  }
};

inline GaussianNB gnb_train(const LabeledDataset& ds, const FeatureMask& mask) {
  ds.validate();
  return GaussianNB::fit(project(ds, mask), label_indices(ds));
}

inline StructureClass gnb_predict(const GaussianNB& model, const FeatureVector& x, const FeatureMask& mask) {
  return class_from_index(model.predict(project(x, mask)));
}

}  // namespace vibesense
