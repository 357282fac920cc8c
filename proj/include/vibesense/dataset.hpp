#pragma once

// Labeled feature datasets, seeded partitioning, and z-score normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vibesense/core.hpp"
#include "vibesense/features.hpp"

namespace vibesense {

struct RowMeta {
  std::string node;
  std::string site;
  std::optional<int> floor_index;
};

struct LabeledDataset {
  std::vector<FeatureVector> rows;
  std::vector<StructureClass> labels;
  std::vector<RowMeta> meta;

  std::size_t size() const { return rows.size(); }

  void add(const FeatureVector& f, StructureClass c, RowMeta m = {}) {
    rows.push_back(f);
    labels.push_back(c);
    meta.push_back(std::move(m));
  }

  void validate() const {
    if (rows.size() != labels.size()) throw ConfigError("dataset rows/labels length mismatch");
    if (!meta.empty() && meta.size() != rows.size()) throw ConfigError("dataset meta length mismatch");
    if (rows.empty()) throw InsufficientDataError("dataset is empty");
  }

  LabeledDataset subset(const std::vector<std::size_t>& idx) const {
    LabeledDataset out;
    out.rows.reserve(idx.size());
    for (auto i : idx) {
      out.rows.push_back(rows.at(i));
      out.labels.push_back(labels.at(i));
      out.meta.push_back(i < meta.size() ? meta[i] : RowMeta{});
    }
    return out;
  }

  std::array<std::size_t, kNumClasses> class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (auto c : labels) ++counts[static_cast<std::size_t>(class_index(c))];
    return counts;
  }
};

/// Features of every labeled window; unlabeled windows are rejected.
inline LabeledDataset features_of(const std::vector<RawWindow>& windows) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (!w.source) throw SchemaError("window " + std::to_string(i) + " has no class label");
    ds.add(extract_features(w), *w.source, RowMeta{"", "", w.floor_index});
  }
  return ds;
}

using FeatureMask = std::array<bool, kNumFeatures>;

inline constexpr FeatureMask kAllFeatures = {true, true, true, true, true, true,
                                             true, true, true, true, true, true};

/// mean, standard deviation, max, rms, average of peak values.
inline constexpr FeatureMask kSelectedFive = [] {
  FeatureMask m{};
  m[feature_index(Feature::Mean)] = true;
  m[feature_index(Feature::StdDev)] = true;
  m[feature_index(Feature::Max)] = true;
  m[feature_index(Feature::Rms)] = true;
  m[feature_index(Feature::AvgPeakValue)] = true;
  return m;
}();

inline std::vector<double> project(const FeatureVector& f, const FeatureMask& mask) {
  const auto a = f.to_array();
  std::vector<double> out;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (mask[j]) out.push_back(a[j]);
  }
  return out;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix project(const LabeledDataset& ds, const FeatureMask& mask) {
  Matrix out;
  out.reserve(ds.size());
  for (const auto& r : ds.rows) out.push_back(project(r, mask));
  return out;
}

inline std::vector<int> label_indices(const LabeledDataset& ds) {
  std::vector<int> y;
  y.reserve(ds.labels.size());
  for (auto c : ds.labels) y.push_back(class_index(c));
  return y;
}

// --- partitioning ------------------------------------------------------------

/// Split `n` items by `ratios`: floor each share, then hand the leftover items
/// one at a time to the shares with the largest fractional remainder (ties go
/// to the larger ratio, then to the earlier part).
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& ratios) {
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double share = ratios[i] * static_cast<double>(n);
    // Guard against 0.7 * 1159 = 811.30000000000007 style noise.
    const double fl = std::floor(share + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, share - fl);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return ratios[a] > ratios[b];
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

inline void validate_ratios(const std::vector<double>& ratios) {
  if (ratios.size() < 2) throw ConfigError("split needs at least two ratios");
  double s = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    s += r;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

/// Seeded partition of row indices. Stratified splits apportion every class
/// separately so class proportions hold within one row per partition.
inline std::vector<std::vector<std::size_t>> split(const LabeledDataset& ds,
                                                   const std::vector<double>& ratios,
                                                   std::uint64_t seed, bool stratified) {
  ds.validate();
  validate_ratios(ratios);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> parts(ratios.size());

  if (!stratified) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto sizes = apportion(idx.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      parts[p].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                      idx.begin() + static_cast<std::ptrdiff_t>(pos + sizes[p]));
      pos += sizes[p];
    }
    return parts;
  }

  for (auto c : kAllClasses) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == c) idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto sizes = apportion(idx.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (sizes[p] == 0 && ratios[p] > 0.0) {
        throw StratificationError("cannot stratify: class " + std::string(class_id(c)) + " has " +
                                  std::to_string(idx.size()) + " rows, too few for partition " +
                                  std::to_string(p));
      }
      parts[p].insert(parts[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                      idx.begin() + static_cast<std::ptrdiff_t>(pos + sizes[p]));
      pos += sizes[p];
    }
  }
  for (auto& p : parts) std::shuffle(p.begin(), p.end(), rng);
  return parts;
}

/// Stratified k-fold assignment: each class is shuffled and dealt round-robin.
inline std::vector<std::vector<std::size_t>> kfold(const std::vector<int>& labels, std::size_t folds,
                                                   std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (labels.size() < folds) throw InsufficientDataError("fewer rows than folds");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t deal = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) out[deal++ % folds].push_back(i);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

inline std::vector<std::size_t> complement(const std::vector<std::vector<std::size_t>>& folds,
                                           std::size_t held_out) {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- normalization -----------------------------------------------------------

/// Per-column z-scoring fitted on a training matrix. Constant columns are
/// dropped (kept_columns lists the survivors).
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::size_t> kept_columns;

  static Normalizer fit(const Matrix& x, bool warn = true) {
    if (x.empty()) throw InsufficientDataError("cannot fit normalizer on empty data");
    const std::size_t d = x.front().size();
    Normalizer nz;
    const auto n = static_cast<double>(x.size());
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (const auto& r : x) m += r[j];
      m /= n;
      double v = 0.0;
      for (const auto& r : x) v += (r[j] - m) * (r[j] - m);
      const double s = std::sqrt(v / n);
      if (s > 0.0 && std::isfinite(s)) {
        nz.kept_columns.push_back(j);
        nz.mean.push_back(m);
        nz.std.push_back(s);
      } else if (warn) {
        std::clog << "warning: dropping constant feature column " << j << "\n";
      }
    }
    if (nz.kept_columns.empty()) throw InsufficientDataError("all feature columns are constant");
    return nz;
  }

  std::vector<double> transform(const std::vector<double>& row) const {
    std::vector<double> out(kept_columns.size());
    for (std::size_t k = 0; k < kept_columns.size(); ++k) {
      out[k] = (row[kept_columns[k]] - mean[k]) / std[k];
    }
    return out;
  }

  Matrix transform(const Matrix& x) const {
    Matrix out;
    out.reserve(x.size());
    for (const auto& r : x) out.push_back(transform(r));
    return out;
  }
};

// --- features CSV ------------------------------------------------------------

inline void write_features_csv(std::ostream& os, const LabeledDataset& ds) {
  for (std::size_t j = 0; j < kNumFeatures; ++j) os << kFeatureColumnNames[j] << ',';
  os << "Type of structure\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.rows[i].to_array()) os << format_double(v) << ',';
    os << class_display_name(ds.labels[i]) << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline LabeledDataset read_features_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("features csv: empty input");
  const auto header = split_csv_line(line);
  if (header.size() != kNumFeatures + 1) {
    throw SchemaError("features csv: expected " + std::to_string(kNumFeatures + 1) + " columns");
  }
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (header[j] != kFeatureColumnNames[j]) {
      throw SchemaError("features csv: column " + std::to_string(j) + " should be '" +
                        std::string(kFeatureColumnNames[j]) + "'");
    }
  }
  LabeledDataset ds;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != kNumFeatures + 1) {
      throw SchemaError("features csv: row " + std::to_string(row) + " has wrong column count");
    }
    std::array<double, kNumFeatures> a{};
    for (std::size_t j = 0; j < kNumFeatures; ++j) a[j] = parse_double(cells[j]);
    auto c = parse_class(cells[kNumFeatures]);
    if (!c) throw SchemaError("features csv: unknown structure '" + cells[kNumFeatures] + "'");
    ds.add(FeatureVector::from_array(a), *c);
  }
  return ds;
}

inline void save_features_csv(const std::string& path, const LabeledDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_features_csv(os, ds);
}

inline LabeledDataset load_features_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return read_features_csv(is);
}

}  // namespace vibesense
