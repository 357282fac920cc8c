#pragma once

// The 12 time-domain window statistics and the DC-removed spectrum check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "vibesense/core.hpp"
#include "vibesense/signal_sim.hpp"

namespace vibesense {

inline constexpr std::size_t kNumFeatures = 12;

/// Feature slots, in dataset-table column order.
enum class Feature : std::size_t {
  Mean = 0,
  Mode,
  Median,
  StdDev,
  Max,
  Min,
  Rms,
  NumPeaks,
  AvgPeakValue,
  Skewness,
  Kurtosis,
  CrestFactor,
};

constexpr std::size_t feature_index(Feature f) { return static_cast<std::size_t>(f); }

/// Column headers for CSV output.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureColumnNames = {
    "Mean", "Mode", "Median", "Standard deviation", "Max", "Min", "RMS",
    "Number of peaks", "Average of peak values", "Skewness", "Kurtosis", "Creast factor"};

/// Keys for JSON output.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureKeys = {
    "mean", "mode", "median", "std_dev", "max", "min", "rms",
    "num_peaks", "avg_peak_value", "skewness", "kurtosis", "creast_factor"};

struct FeatureVector {
  double mean = 0.0;
  double mode = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double max = 0.0;
  double min = 0.0;
  double rms = 0.0;
  double num_peaks = 0.0;
  double avg_peak_value = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess
  double crest_factor = 0.0;

  std::array<double, kNumFeatures> to_array() const {
    return {mean, mode, median, std_dev, max, min, rms,
            num_peaks, avg_peak_value, skewness, kurtosis, crest_factor};
  }

  static FeatureVector from_array(const std::array<double, kNumFeatures>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[11]};
  }

  double operator[](Feature f) const { return to_array()[feature_index(f)]; }

  bool operator==(const FeatureVector&) const = default;
};

/// Interior strict local maxima: x[i] > x[i-1] and x[i] > x[i+1].
template <typename T>
std::vector<std::size_t> find_peaks(std::span<const T> x) {
  std::vector<std::size_t> peaks;
  if (x.size() < 3) return peaks;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1]) peaks.push_back(i);
  }
  return peaks;
}

inline std::vector<std::size_t> find_peaks(const std::vector<int>& x) {
  return find_peaks(std::span<const int>(x));
}

/// Statistics over any numeric sequence. Population moments; the mode is the
/// most frequent value with ties going to the smallest; skewness and excess
/// kurtosis are 0 for a zero-variance input.
template <typename T>
FeatureVector compute_features(std::span<const T> x) {
  const std::size_t n = x.size();
  if (n < 4) throw InsufficientDataError("feature extraction needs at least 4 samples");

  FeatureVector f;
  const auto nd = static_cast<double>(n);

  double sum = 0.0;
  double sum_sq = 0.0;
  double lo = static_cast<double>(x[0]);
  double hi = lo;
  for (const T& v : x) {
    const auto d = static_cast<double>(v);
    if (!std::isfinite(d)) throw InvalidSignalError("non-finite sample");
    sum += d;
    sum_sq += d * d;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  f.mean = sum / nd;
  f.min = lo;
  f.max = hi;
  f.rms = std::sqrt(sum_sq / nd);

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  f.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  // Runs in the sorted copy; strict '>' keeps the smallest value on ties.
  std::size_t best_run = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    if (j - i > best_run) {
      best_run = j - i;
      f.mode = sorted[i];
    }
    i = j;
  }

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (const T& v : x) {
    const double d = static_cast<double>(v) - f.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  f.std_dev = std::sqrt(m2);
  if (lo == hi || m2 <= 0.0) {
    f.skewness = 0.0;
    f.kurtosis = 0.0;
  } else {
    f.skewness = m3 / std::pow(m2, 1.5);
    f.kurtosis = m4 / (m2 * m2) - 3.0;
  }

  const auto peaks = find_peaks(x);
  f.num_peaks = static_cast<double>(peaks.size());
  if (!peaks.empty()) {
    double s = 0.0;
    for (auto i : peaks) s += static_cast<double>(x[i]);
    f.avg_peak_value = s / static_cast<double>(peaks.size());
  }

  f.crest_factor = f.rms > 0.0 ? f.max / f.rms : 0.0;
  return f;
}

inline FeatureVector extract_features(const RawWindow& w) {
  if (w.samples.size() < 4) {
    throw InsufficientDataError("window has " + std::to_string(w.samples.size()) +
                                " samples, need at least 4");
  }
  return compute_features(std::span<const int>(w.samples));
}

// --- spectrum ----------------------------------------------------------------

/// Dominance ratio at or above this value counts as an obvious tone.
inline constexpr double kDominanceThreshold = 10.0;

struct SpectrumReport {
  std::vector<double> bin_magnitudes;  // bins 1..floor(n/2); element k-1 is bin k
  std::size_t dominant_bin = 0;
  double dominance_ratio = 1.0;

  bool has_obvious_component(double threshold = kDominanceThreshold) const {
    return dominance_ratio >= threshold;
  }
};

/// |DFT| of the mean-removed sequence for bins 1..floor(n/2).
template <typename T>
std::vector<double> dft_magnitudes(std::span<const T> x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (const T& v : x) mean += static_cast<double>(v);
  mean /= static_cast<double>(n);

  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = static_cast<double>(x[i]) - mean;

  std::vector<double> cos_table(n), sin_table(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    cos_table[m] = std::cos(angle);
    sin_table[m] = std::sin(angle);
  }

  const std::size_t half = n / 2;
  std::vector<double> mags(half);
  for (std::size_t k = 1; k <= half; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t phase = 0;
    for (std::size_t i = 0; i < n; ++i) {
      re += centered[i] * cos_table[phase];
      im -= centered[i] * sin_table[phase];
      phase += k;
      if (phase >= n) phase -= n;
    }
    mags[k - 1] = std::hypot(re, im);
  }
  return mags;
}

inline SpectrumReport spectral_profile(const RawWindow& w) {
  if (w.samples.size() < 8) {
    throw InsufficientDataError("spectral profile needs at least 8 samples");
  }
  SpectrumReport r;
  r.bin_magnitudes = dft_magnitudes(std::span<const int>(w.samples));

  const auto& mags = r.bin_magnitudes;
  const auto it = std::max_element(mags.begin(), mags.end());
  r.dominant_bin = static_cast<std::size_t>(it - mags.begin()) + 1;
  const double peak = *it;

  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

  // A constant window leaves only rounding residue in every bin.
  double scale = 0.0;
  for (int v : w.samples) scale = std::max(scale, std::abs(static_cast<double>(v)));
  const double tiny = 1e-9 * std::max(1.0, scale) * static_cast<double>(w.samples.size());
  if (peak <= tiny) {
    r.dominance_ratio = 1.0;
  } else if (median <= 0.0) {
    r.dominance_ratio = std::numeric_limits<double>::infinity();
  } else {
    r.dominance_ratio = peak / median;
  }
  return r;
}

}  // namespace vibesense
