#pragma once

// Independent reference implementations used as test oracles. Written
// deliberately differently from the library (maps, long double, brute force).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

struct Stats {
  double mean, mode, median, std_dev, max, min, rms, num_peaks, avg_peak, skew, kurt, crest;
};

inline Stats naive_features(const std::vector<int>& x) {
  const std::size_t n = x.size();
  long double s = 0, s2 = 0;
  for (int v : x) {
    s += v;
    s2 += static_cast<long double>(v) * v;
  }
  const long double mean = s / n;

  std::map<int, std::size_t> counts;
  for (int v : x) ++counts[v];
  int mode = counts.begin()->first;
  std::size_t best = 0;
  for (const auto& [v, c] : counts) {
    if (c > best) {
      best = c;
      mode = v;
    }
  }

  std::vector<int> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const double median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;

  long double m2 = 0, m3 = 0, m4 = 0;
  for (int v : x) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  std::size_t peaks = 0;
  long double peak_sum = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    bool left = x[i] > x[i - 1];
    bool right = x[i] > x[i + 1];
    if (left && right) {
      ++peaks;
      peak_sum += x[i];
    }
  }

  Stats st{};
  st.mean = static_cast<double>(mean);
  st.mode = mode;
  st.median = median;
  st.std_dev = static_cast<double>(std::sqrt(m2));
  st.max = sorted.back();
  st.min = sorted.front();
  st.rms = static_cast<double>(std::sqrt(s2 / n));
  st.num_peaks = static_cast<double>(peaks);
  st.avg_peak = peaks ? static_cast<double>(peak_sum / peaks) : 0.0;
  st.skew = m2 > 0 ? static_cast<double>(m3 / std::pow(m2, 1.5L)) : 0.0;
  st.kurt = m2 > 0 ? static_cast<double>(m4 / (m2 * m2) - 3) : 0.0;
  st.crest = st.rms > 0 ? st.max / st.rms : 0.0;
  return st;
}

inline std::array<double, 12> as_array(const Stats& s) {
  return {s.mean, s.mode, s.median, s.std_dev, s.max, s.min, s.rms, s.num_peaks, s.avg_peak, s.skew, s.kurt, s.crest};
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

/// Relative error with an absolute floor for values that should be ~0.
inline double mixed_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

/// Least squares via the 2x2 normal matrix inverse on uncentered sums.
inline std::pair<double, double> normal_equation_fit(const std::vector<double>& x, const std::vector<double>& y) {
  long double a = 0, b = 0, c = 0, d = 0, e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    a += static_cast<long double>(x[i]) * x[i];
    b += x[i];
    d += static_cast<long double>(x[i]) * y[i];
    e += y[i];
  }
  c = static_cast<long double>(x.size());
  const long double det = a * c - b * b;
  const long double m = (c * d - b * e) / det;
  const long double k = (a * e - b * d) / det;
  return {static_cast<double>(m), static_cast<double>(k)};
}

// Dataset-table rows: max, rms, printed crest.
struct TableRow {
  const char* structure;
  double mean, mode, median, std_dev, max, min, rms, num_peaks, avg_peak, skew, kurt, crest;
};

inline constexpr std::array<TableRow, 5> kSampleTable = {{
    {"Building", 20.16, 19, 21, 10.38, 96, 0, 22.68, 651, 26.59, 1.9, 10.03, 4.23},
    {"Flyover", 28.21, 0, 0, 35.72, 255, 0, 45.52, 579, 66, 1.68, 3.68, 5.6},
    {"Railline", 62.86, 5, 63, 1.89, 66, 37, 62.89, 498, 63.77, -4.81, 49.46, 1.05},
    {"Steel overbridge", 154.67, 0, 0, 178.66, 747, 0, 236.31, 613, 297.05, 1.19, 0.85, 3.16},
    {"Concrete overbridge", 24.9, 68, 0, 24.45, 259, 0, 34.9, 630, 44.88, 1.78, 7.29, 7.42},
}};

// Correlation table in its printed row order.
inline const char* const kCorrelationCsv =
    "Features,Correlation value,Prediction value\n"
    "Mean,0.716656053,0.000000023\n"
    "Median,0.090901681,0.190540928\n"
    "Mode,0.154416336,0.025589244\n"
    "Standard deviation,0.584570249,0.00000163\n"
    "Max,0.406880713,0.000000041\n"
    "Min,0.26979996,0.000078\n"
    "RMS,0.784558941,0.000000001\n"
    "Number of peaks,-0.274614018,0.0000572\n"
    "Average of peaks,0.756443394,0.000000017\n"
    "Skewness,0.228503295,0.000875476\n"
    "Kurtosis,0.123029244,0.075948388\n"
    "Creast factor,0.195535324,0.004549568\n";

}  // namespace oracle
