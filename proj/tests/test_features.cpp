#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vibesense/features.hpp"

using namespace vibesense;

namespace {

RawWindow window_of(std::vector<int> s) {
  RawWindow w;
  w.samples = std::move(s);
  return w;
}

std::vector<int> random_samples(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::vector<int> x(n);
  switch (kind(rng)) {
    case 0: {
      std::uniform_int_distribution<int> u(0, 1023);
      for (auto& v : x) v = u(rng);
      break;
    }
    case 1: {
      std::normal_distribution<double> g(60, 5);
      for (auto& v : x) v = std::clamp(static_cast<int>(std::lround(g(rng))), 0, 1023);
      break;
    }
    default: {
      std::uniform_int_distribution<int> u(0, 3);
      for (auto& v : x) v = u(rng) == 0 ? 200 : 0;
    }
  }
  return x;
}

}  // namespace

TEST(Features, ConstantSeries) {
  const auto f = extract_features(window_of({5, 5, 5, 5}));
  EXPECT_EQ(f.mean, 5);
  EXPECT_EQ(f.median, 5);
  EXPECT_EQ(f.mode, 5);
  EXPECT_EQ(f.std_dev, 0);
  EXPECT_EQ(f.max, 5);
  EXPECT_EQ(f.min, 5);
  EXPECT_EQ(f.rms, 5);
  EXPECT_EQ(f.num_peaks, 0);
  EXPECT_EQ(f.avg_peak_value, 0);
  EXPECT_EQ(f.skewness, 0);
  EXPECT_EQ(f.kurtosis, 0);
  EXPECT_EQ(f.crest_factor, 1);
}

TEST(Features, AllZeroWindowHasZeroCrest) {
  const auto f = extract_features(window_of({0, 0, 0, 0, 0}));
  EXPECT_EQ(f.crest_factor, 0);
  EXPECT_EQ(f.rms, 0);
}

TEST(Features, AlternatingHandComputed) {
  const auto f = extract_features(window_of({0, 3, 0, 3, 0}));
  EXPECT_DOUBLE_EQ(f.mean, 1.2);
  EXPECT_EQ(f.median, 0);
  EXPECT_EQ(f.mode, 0);
  EXPECT_NEAR(f.std_dev, std::sqrt(2.16), 1e-12);
  EXPECT_EQ(f.max, 3);
  EXPECT_EQ(f.min, 0);
  EXPECT_NEAR(f.rms, std::sqrt(3.6), 1e-12);
  EXPECT_EQ(f.num_peaks, 2);
  EXPECT_EQ(f.avg_peak_value, 3);
  EXPECT_NEAR(f.crest_factor, 3 / std::sqrt(3.6), 1e-12);
  EXPECT_NEAR(f.crest_factor, 1.5811, 1e-4);
}

TEST(Features, ModeTieGoesToSmallest) {
  EXPECT_EQ(extract_features(window_of({9, 9, 2, 2, 7})).mode, 2);
  EXPECT_EQ(extract_features(window_of({4, 1, 3, 2})).mode, 1);
}

TEST(Features, EvenLengthMedianAverages) {
  EXPECT_DOUBLE_EQ(extract_features(window_of({1, 2, 3, 10})).median, 2.5);
}

TEST(Features, TooShortWindow) {
  EXPECT_THROW(extract_features(window_of({1, 2, 3})), InsufficientDataError);
  EXPECT_THROW(extract_features(window_of({})), InsufficientDataError);
}

TEST(Features, SampleTableCrestConsistency) {
  for (const auto& row : oracle::kSampleTable) {
    EXPECT_NEAR(row.max / row.rms, row.crest, 0.01) << row.structure;
  }
}

TEST(Features, CrestFromTableBuildingRow) {
  // A window whose max is 96 and rms 22.68 has crest 4.23.
  EXPECT_NEAR(96.0 / 22.68, 4.23, 0.005);
}

TEST(Features, MatchesNaiveOracleOnRandomWindows) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> len(4, 400);
  for (int t = 0; t < 300; ++t) {
    const auto x = random_samples(rng, len(rng));
    const auto got = extract_features(window_of(x)).to_array();
    const auto want = oracle::as_array(oracle::naive_features(x));
    for (std::size_t j = 0; j < 12; ++j) {
      ASSERT_LT(oracle::mixed_err(got[j], want[j]), 1e-9) << kFeatureKeys[j] << " trial " << t;
    }
  }
}

TEST(Features, InvariantsOnSyntheticWindows) {
  FrontEndConfig cfg;
  for (auto c : kAllClasses) {
    for (std::uint64_t s = 0; s < 40; ++s) {
      const auto f = extract_features(synth_window(default_profile(c), cfg, s));
      ASSERT_LE(f.min, f.median);
      ASSERT_LE(f.median, f.max);
      ASSERT_LE(f.min, f.mean);
      ASSERT_LE(f.mean, f.max);
      ASSERT_GE(f.rms, f.mean);
      ASSERT_GE(f.std_dev, 0);
      ASSERT_GE(f.num_peaks, 0);
      if (f.rms > 0) ASSERT_LT(oracle::rel_err(f.crest_factor * f.rms, f.max), 1e-9);
      ASSERT_LT(oracle::rel_err(f.std_dev * f.std_dev + f.mean * f.mean, f.rms * f.rms), 1e-9);
    }
  }
}

TEST(Features, ScaleEquivariance) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 100);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(257);
    for (auto& v : x) v = u(rng);
    for (double alpha : {0.5, 3.0, 7.25}) {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i];
      const auto fx = compute_features(std::span<const double>(x));
      const auto fy = compute_features(std::span<const double>(y));
      for (auto ft : {Feature::Mean, Feature::Median, Feature::Mode, Feature::StdDev, Feature::Max, Feature::Min,
                      Feature::Rms, Feature::AvgPeakValue}) {
        ASSERT_LT(oracle::mixed_err(fy[ft], alpha * fx[ft]), 1e-12);
      }
      for (auto ft : {Feature::Skewness, Feature::Kurtosis, Feature::CrestFactor, Feature::NumPeaks}) {
        ASSERT_LT(oracle::mixed_err(fy[ft], fx[ft], 1e-9), 1e-9);
      }
    }
  }
}

TEST(Peaks, MonotoneHasNone) {
  EXPECT_TRUE(find_peaks(std::vector<int>{1, 2, 3, 4, 5}).empty());
  EXPECT_TRUE(find_peaks(std::vector<int>{5, 4, 3}).empty());
}

TEST(Peaks, Alternating) {
  EXPECT_EQ(find_peaks(std::vector<int>{0, 3, 0, 3, 0}), (std::vector<std::size_t>{1, 3}));
}

TEST(Peaks, PlateauAndEndpointsAreNotPeaks) {
  EXPECT_TRUE(find_peaks(std::vector<int>{0, 2, 2, 0}).empty());
  EXPECT_TRUE(find_peaks(std::vector<int>{9, 0, 9}).empty());
  EXPECT_TRUE(find_peaks(std::vector<int>{1, 2}).empty());
}

TEST(Peaks, MatchesBruteForceRescan) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_samples(rng, 1600);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i == 0 || i + 1 == x.size()) continue;
      if (x[i - 1] < x[i] && x[i + 1] < x[i]) want.push_back(i);
    }
    ASSERT_EQ(find_peaks(x), want);
  }
}

TEST(Spectrum, SinusoidAtBin5) {
  RawWindow w;
  const std::size_t n = 1600;
  for (std::size_t i = 0; i < n; ++i) {
    w.samples.push_back(static_cast<int>(std::lround(300 + 100 * std::sin(2 * std::numbers::pi * 5 * i / n))));
  }
  const auto r = spectral_profile(w);
  EXPECT_EQ(r.dominant_bin, 5u);
  EXPECT_GT(r.dominance_ratio, 100.0);
  EXPECT_TRUE(r.has_obvious_component());
  EXPECT_EQ(r.bin_magnitudes.size(), n / 2);
}

TEST(Spectrum, ConstantWindowIsFlat) {
  RawWindow w;
  w.samples.assign(64, 42);
  const auto r = spectral_profile(w);
  EXPECT_EQ(r.dominance_ratio, 1.0);
  EXPECT_FALSE(r.has_obvious_component());
}

TEST(Spectrum, WhiteNoiseBelowThreshold) {
  int below = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> g(100, 20);
    RawWindow w;
    for (int i = 0; i < 1600; ++i) w.samples.push_back(std::clamp(static_cast<int>(std::lround(g(rng))), 0, 1023));
    const auto r = spectral_profile(w);
    EXPECT_GE(r.dominance_ratio, 1.0);
    below += r.dominance_ratio < kDominanceThreshold;
  }
  EXPECT_GE(below, 95);
}

TEST(Spectrum, DftMatchesDirectComplexSum) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 50);
  std::vector<int> x(37);
  for (auto& v : x) v = u(rng);
  const auto mags = dft_magnitudes(std::span<const int>(x));
  double mean = 0;
  for (int v : x) mean += v;
  mean /= x.size();
  for (std::size_t k = 1; k <= x.size() / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += (x[i] - mean) * std::polar(1.0, -2 * std::numbers::pi * double(k * i) / double(x.size()));
    }
    ASSERT_NEAR(mags[k - 1], std::abs(acc), 1e-9);
  }
}

TEST(Spectrum, ShortWindowRejected) {
  EXPECT_THROW(spectral_profile(window_of({1, 2, 3, 4, 5, 6, 7})), InsufficientDataError);
}
