#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "vibesense/stats_select.hpp"

using namespace vibesense;

namespace {

CorrelationReport table_report() {
  std::istringstream is(oracle::kCorrelationCsv);
  return read_correlation_csv(is, 1159);
}

FeatureMask mask_of(std::initializer_list<Feature> fs) {
  FeatureMask m{};
  for (auto f : fs) m[feature_index(f)] = true;
  return m;
}

double permutation_p(const std::vector<double>& x, std::vector<double> y, std::size_t perms, std::uint64_t seed) {
  const double observed = std::abs(oracle::brute_pearson(x, y));
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < perms; ++p) {
    for (std::size_t i = y.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(y[i], y[pick(rng)]);
    }
    hits += std::abs(oracle::brute_pearson(x, y)) >= observed - 1e-12;
  }
  return static_cast<double>(hits) / static_cast<double>(perms);
}

// y built so that the sample correlation with x is exactly `r`.
std::pair<std::vector<double>, std::vector<double>> planted_pair(double r, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> x(n), z(n);
  for (auto& v : x) v = g(rng);
  for (auto& v : z) v = g(rng);
  auto center_scale = [](std::vector<double>& v) {
    double m = 0;
    for (double a : v) m += a;
    m /= v.size();
    double s = 0;
    for (auto& a : v) {
      a -= m;
      s += a * a;
    }
    s = std::sqrt(s);
    for (auto& a : v) a /= s;
  };
  center_scale(x);
  double proj = 0;
  for (std::size_t i = 0; i < n; ++i) proj += x[i] * z[i];
  for (std::size_t i = 0; i < n; ++i) z[i] -= proj * x[i];
  center_scale(z);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = r * x[i] + std::sqrt(1 - r * r) * z[i];
  return {x, y};
}

}  // namespace

TEST(Pearson, SelfAndNegation) {
  std::vector<double> x{1, 5, 2, 8, 3};
  std::vector<double> nx;
  for (double v : x) nx.push_back(-v);
  EXPECT_DOUBLE_EQ(pearson_r(x, x), 1.0);
  EXPECT_DOUBLE_EQ(pearson_r(x, nx), -1.0);
}

TEST(Pearson, MatchesDirectFormula) {
  std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 9};
  EXPECT_NEAR(pearson_r(x, y), oracle::brute_pearson(x, y), 1e-12);
}

TEST(Pearson, ConstantInputIsUndefined) {
  std::vector<double> x{1, 1, 1, 1}, y{1, 2, 3, 4};
  EXPECT_THROW(pearson_r(x, y), UndefinedCorrelationError);
  EXPECT_THROW(pearson_r(y, x), UndefinedCorrelationError);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InsufficientDataError);
}

TEST(Pearson, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(30), y(30), ax(30), by(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = g(rng);
      y[i] = x[i] + g(rng);
      ax[i] = 3.5 * x[i] - 20;
      by[i] = 0.01 * y[i] + 7;
    }
    const double r = pearson_r(x, y);
    ASSERT_NEAR(pearson_r(y, x), r, 1e-12);
    ASSERT_NEAR(pearson_r(ax, by), r, 1e-12);
    ASSERT_LE(std::abs(r), 1.0);
  }
}

TEST(PValue, Limits) {
  EXPECT_EQ(p_value(0.0, 10), 1.0);
  EXPECT_EQ(p_value(0.0, 1000), 1.0);
  EXPECT_EQ(p_value(1.0, 10), 0.0);
  EXPECT_EQ(p_value(-1.0, 10), 0.0);
  EXPECT_LT(p_value(0.999999, 10), 1e-10);
}

TEST(PValue, KnownStudentTValue) {
  // r = 0.5, n = 12: t^2 = 40/3, df 10, so x = df / (df + t^2) = 3/7 and
  // p = I_{3/7}(5, 1/2). scipy.stats.t.sf gives 2 * 0.048927... = 0.0978546142578125.
  EXPECT_NEAR(p_value(0.5, 12), 0.0978546142578125, 1e-12);
}

TEST(PValue, MatchesPermutationOracle) {
  const auto [x, y] = planted_pair(0.5, 102, 17);
  ASSERT_NEAR(oracle::brute_pearson(x, y), 0.5, 1e-12);
  const std::size_t perms = 1000000;
  const double est = permutation_p(x, y, perms, 8);
  // Clopper-Pearson style 99% interval; with zero hits the upper bound is -ln(0.005)/N.
  const double p = p_value(0.5, 102);
  const double half = 2.576 * std::sqrt(std::max(est * (1 - est), 1e-300) / perms);
  const double hi = est == 0.0 ? 5.3 / perms : est + half;
  const double lo = std::max(0.0, est - half);
  EXPECT_GE(p, lo);
  EXPECT_LE(p, hi);
}

TEST(PValue, MatchesPermutationAtModerateEffect) {
  const auto [x, y] = planted_pair(0.2, 102, 23);
  const std::size_t perms = 200000;
  const double est = permutation_p(x, y, perms, 9);
  const double p = p_value(0.2, 102);
  const double half = 3.29 * std::sqrt(est * (1 - est) / perms);
  EXPECT_NEAR(p, est, half + 0.05 * est);
}

TEST(PValue, StrictlyDecreasingInRAndN) {
  double prev = 1.0;
  for (double r = 0.05; r < 0.99; r += 0.05) {
    const double p = p_value(r, 50);
    ASSERT_LT(p, prev);
    ASSERT_EQ(p, p_value(-r, 50));
    prev = p;
  }
  prev = 1.0;
  for (std::size_t n = 3; n < 400; n += 7) {
    const double p = p_value(0.3, n);
    ASSERT_LT(p, prev);
    prev = p;
  }
}

TEST(Select, PublishedTableYieldsFive) {
  const auto mask = select_features(table_report(), SelectionRule{0.4, 0.00005});
  EXPECT_EQ(mask, kSelectedFive);
  EXPECT_EQ(mask, mask_of({Feature::Mean, Feature::StdDev, Feature::Max, Feature::Rms, Feature::AvgPeakValue}));
}

TEST(Select, AllZeroRIsEmpty) {
  CorrelationReport rep;
  rep.p.fill(1.0);
  EXPECT_EQ(select_features(rep), FeatureMask{});
}

TEST(Select, VacuousRuleSelectsAll) {
  EXPECT_EQ(select_features(table_report(), SelectionRule{0.0, 1.0}),
            mask_of({Feature::Mean, Feature::Mode, Feature::Median, Feature::StdDev, Feature::Max, Feature::Min,
                     Feature::Rms, Feature::AvgPeakValue, Feature::Skewness, Feature::Kurtosis,
                     Feature::CrestFactor}));
  CorrelationReport rep;
  rep.p.fill(1.0);
  EXPECT_EQ(select_features(rep, SelectionRule{0.0, 1.0}), kAllFeatures);
}

TEST(Select, MonotoneWhenRelaxed) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ur(-1, 1), up(0, 1), ut(0, 1);
  for (int t = 0; t < 500; ++t) {
    CorrelationReport rep;
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      rep.r[j] = ur(rng);
      rep.p[j] = up(rng) * up(rng);
    }
    SelectionRule strict{ut(rng), 0.001 + 0.998 * ut(rng)};
    SelectionRule relaxed{strict.r_min * ut(rng), strict.p_max + (1 - strict.p_max) * ut(rng)};
    const auto a = select_features(rep, strict);
    const auto b = select_features(rep, relaxed);
    for (std::size_t j = 0; j < kNumFeatures; ++j) ASSERT_TRUE(!a[j] || b[j]);
  }
}

TEST(Select, RuleValidation) {
  EXPECT_THROW(select_features(table_report(), SelectionRule{1.5, 0.1}), ConfigError);
  EXPECT_THROW(select_features(table_report(), SelectionRule{0.4, 0.0}), ConfigError);
}

TEST(CorrelationTable, PerfectPredictor) {
  LabeledDataset ds;
  for (int i = 0; i < 50; ++i) {
    FeatureVector f;
    f.mean = i % 5;
    f.max = (i * 7) % 13;
    f.rms = 1;  // constant column
    ds.add(f, class_from_index(i % 5));
  }
  const auto rep = correlation_table(ds);
  EXPECT_NEAR(rep.r[feature_index(Feature::Mean)], 1.0, 1e-12);
  EXPECT_EQ(rep.p[feature_index(Feature::Mean)], 0.0);
  EXPECT_EQ(rep.r[feature_index(Feature::Rms)], 0.0);
  EXPECT_EQ(rep.p[feature_index(Feature::Rms)], 1.0);
  EXPECT_EQ(rep.n, 50u);
}

TEST(CorrelationTable, SingleClassIsUndefined) {
  LabeledDataset ds;
  for (int i = 0; i < 10; ++i) {
    FeatureVector f;
    f.mean = i;
    ds.add(f, StructureClass::Flyover);
  }
  EXPECT_THROW(correlation_table(ds), UndefinedCorrelationError);
}

TEST(CorrelationTable, IndependentFeatureRarelySignificant) {
  int ok = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s));
    std::normal_distribution<double> g(10, 1);
    LabeledDataset ds;
    for (int i = 0; i < 1000; ++i) {
      FeatureVector f;
      f.mean = g(rng);
      ds.add(f, class_from_index(i % 5));
    }
    const auto rep = correlation_table(ds);
    ok += std::abs(rep.r[0]) < 0.1 && rep.p[0] > 0.001;
  }
  EXPECT_GE(ok, static_cast<int>(0.99 * seeds));
}

TEST(CorrelationTable, ShuffledLabelsCenterOnZero) {
  LabeledDataset ds;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    FeatureVector f;
    f.mean = (i % 5) * 10.0 + std::normal_distribution<double>(0, 1)(rng);
    ds.add(f, class_from_index(i % 5));
  }
  ASSERT_GT(correlation_table(ds).r[0], 0.9);
  double sum = 0;
  const int shuffles = 200;
  for (int s = 0; s < shuffles; ++s) {
    auto shuffled = ds;
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
    sum += correlation_table(shuffled).r[0];
  }
  EXPECT_NEAR(sum / shuffles, 0.0, 0.02);
}

TEST(CorrelationCsv, RoundTrip) {
  const auto rep = table_report();
  std::stringstream ss;
  write_correlation_csv(ss, rep);
  const auto back = read_correlation_csv(ss);
  EXPECT_EQ(back.r, rep.r);
  EXPECT_EQ(back.p, rep.p);
}

TEST(CorrelationCsv, MissingFeatureIsSchemaError) {
  std::istringstream is("Features,Correlation value,Prediction value\nMean,0.7,0.01\n");
  EXPECT_THROW(read_correlation_csv(is), SchemaError);
  std::istringstream bad("Features,Correlation value,Prediction value\nLoudness,0.7,0.01\n");
  EXPECT_THROW(read_correlation_csv(bad), SchemaError);
}
