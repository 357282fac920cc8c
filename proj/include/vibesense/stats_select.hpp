#pragma once

// Pearson correlation of each feature against the encoded structure label,
// two-sided t-test p-values, and threshold-based feature selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "vibesense/core.hpp"
#include "vibesense/dataset.hpp"
#include "vibesense/features.hpp"

namespace vibesense {

/// r = cov(x, y) / (sigma_x * sigma_y), population moments.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("pearson_r: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw InsufficientDataError("pearson_r: need at least 3 pairs");
  const auto nd = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= nd;
  my /= nd;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw UndefinedCorrelationError("pearson_r: constant sequence");
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// Two-sided p-value of H0: rho = 0, with t = r sqrt((n-2)/(1-r^2)) under a
/// Student t with n-2 degrees of freedom. P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double p_value(double r, std::size_t n) {
  if (n < 3) throw InsufficientDataError("p_value: n must be at least 3");
  if (!std::isfinite(r) || std::abs(r) > 1.0) throw ConfigError("p_value: r outside [-1, 1]");
  const double ar = std::abs(r);
  if (ar >= 1.0) return 0.0;
  if (ar == 0.0) return 1.0;
  const double df = static_cast<double>(n - 2);
  // df / (df + t^2) with t^2 = r^2 df / (1 - r^2) simplifies to 1 - r^2.
  const double xarg = 1.0 - ar * ar;
  return std::clamp(boost::math::ibeta(0.5 * df, 0.5, xarg), 0.0, 1.0);
}

struct CorrelationReport {
  std::array<double, kNumFeatures> r{};
  std::array<double, kNumFeatures> p{};
  std::size_t n = 0;
};

struct SelectionRule {
  double r_min = 0.4;
  double p_max = 0.00005;

  void validate() const {
    if (!(r_min >= 0.0 && r_min <= 1.0)) throw ConfigError("r_min must be in [0, 1]");
    if (!(p_max > 0.0 && p_max <= 1.0)) throw ConfigError("p_max must be in (0, 1]");
  }
};

/// Signed r is compared against r_min, so a strong negative correlation is not
/// selected.
inline FeatureMask select_features(const CorrelationReport& report, const SelectionRule& rule = {}) {
  rule.validate();
  FeatureMask mask{};
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    mask[j] = report.r[j] >= rule.r_min && report.p[j] < rule.p_max;
  }
  // A vacuous rule (p_max = 1) still has to admit p = 1 features.
  if (rule.p_max >= 1.0) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) mask[j] = report.r[j] >= rule.r_min;
  }
  return mask;
}

/// Integer encoding used for the label column: Building=0, Flyover=1,
/// Railline=2, SteelOverbridge=3, ConcreteOverbridge=4 unless overridden.
using LabelEncoding = std::array<double, kNumClasses>;
inline constexpr LabelEncoding kDefaultEncoding = {0.0, 1.0, 2.0, 3.0, 4.0};

inline CorrelationReport correlation_table(const LabeledDataset& ds,
                                           const LabelEncoding& encoding = kDefaultEncoding) {
  ds.validate();
  if (ds.size() < 3) throw InsufficientDataError("correlation_table: need at least 3 rows");
  std::vector<double> y;
  y.reserve(ds.size());
  for (auto c : ds.labels) y.push_back(encoding[static_cast<std::size_t>(class_index(c))]);
  bool varied = false;
  for (double v : y) varied = varied || v != y.front();
  if (!varied) throw UndefinedCorrelationError("correlation_table: only one class present");

  CorrelationReport rep;
  rep.n = ds.size();
  std::vector<double> col(ds.size());
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    for (std::size_t i = 0; i < ds.size(); ++i) col[i] = ds.rows[i].to_array()[j];
    bool constant = true;
    for (double v : col) constant = constant && v == col.front();
    if (constant) {
      // No association is measurable; report it as such rather than failing the table.
      rep.r[j] = 0.0;
      rep.p[j] = 1.0;
      continue;
    }
    rep.r[j] = pearson_r(col, y);
    rep.p[j] = p_value(rep.r[j], rep.n);
  }
  return rep;
}

// CSV: Features,Correlation value,Prediction value
inline void write_correlation_csv(std::ostream& os, const CorrelationReport& rep) {
  os << "Features,Correlation value,Prediction value\n";
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    os << kFeatureColumnNames[j] << ',' << format_double(rep.r[j]) << ',' << format_double(rep.p[j])
       << '\n';
  }
}

/// Accepts the feature names used in the CSV header plus the shorter
/// "Average of peaks" spelling used in the correlation table.
inline std::optional<std::size_t> feature_from_name(std::string_view name) {
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (name == kFeatureColumnNames[j] || name == kFeatureKeys[j]) return j;
  }
  if (name == "Average of peaks") return feature_index(Feature::AvgPeakValue);
  return std::nullopt;
}

inline CorrelationReport read_correlation_csv(std::istream& is, std::size_t n = 0) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("correlation csv: empty input");
  const auto header = split_csv_line(line);
  if (header.size() != 3 || header[0] != "Features") {
    throw SchemaError("correlation csv: expected header 'Features,Correlation value,Prediction value'");
  }
  CorrelationReport rep;
  rep.n = n;
  std::array<bool, kNumFeatures> seen{};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw SchemaError("correlation csv: malformed row '" + line + "'");
    const auto j = feature_from_name(cells[0]);
    if (!j) throw SchemaError("correlation csv: unknown feature '" + cells[0] + "'");
    rep.r[*j] = parse_double(cells[1]);
    rep.p[*j] = parse_double(cells[2]);
    seen[*j] = true;
  }
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (!seen[j]) {
      throw SchemaError("correlation csv: missing feature '" + std::string(kFeatureColumnNames[j]) + "'");
    }
  }
  return rep;
}

}  // namespace vibesense
