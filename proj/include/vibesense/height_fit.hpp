#pragma once

// Mean window amplitude versus floor index: per-floor aggregation and an
// ordinary least-squares line fit.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibesense/core.hpp"
#include "vibesense/signal_sim.hpp"

namespace vibesense {

struct FloorObservation {
  int floor_index = 0;
  Orientation orientation = Orientation::Vertical;
  double mean_amplitude = 0.0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::size_t n = 0;

  double operator()(double x) const { return slope * x + intercept; }
};

/// Closed-form normal equations on centered data.
inline FitResult linear_fit(std::span<const Point> pts) {
  if (pts.size() < 2) throw DegenerateFitError("linear_fit: need at least 2 points");
  const auto n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DegenerateFitError("linear_fit: non-finite point");
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx <= 0.0) throw DegenerateFitError("linear_fit: all x values are equal");
  FitResult r;
  r.n = pts.size();
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ss = 0.0;
  for (const auto& p : pts) {
    const double e = p.y - r(p.x);
    ss += e * e;
  }
  r.residual_rms = std::sqrt(ss / n);
  return r;
}

inline FitResult linear_fit(const std::vector<Point>& pts) { return linear_fit(std::span<const Point>(pts)); }

/// One observation per floor: the mean of per-window means for windows of the
/// requested orientation. `floors` lists the floors that must be covered;
/// when empty, every floor seen in `windows` is used.
inline std::vector<FloorObservation> floor_profile(const std::vector<RawWindow>& windows, Orientation orientation,
                                                   const std::vector<int>& floors = {}) {
  std::map<int, std::pair<double, std::size_t>> acc;
  std::map<int, bool> seen_any;
  for (const auto& w : windows) {
    if (!w.floor_index) continue;
    seen_any[*w.floor_index] = true;
    if (!w.orientation || *w.orientation != orientation) continue;
    auto& a = acc[*w.floor_index];
    a.first += w.mean();
    ++a.second;
  }
  std::vector<int> wanted = floors;
  if (wanted.empty()) {
    for (const auto& [f, _] : seen_any) wanted.push_back(f);
  }
  std::string missing;
  for (int f : wanted) {
    if (!acc.count(f)) missing += (missing.empty() ? "" : ", ") + std::to_string(f);
  }
  if (!missing.empty()) {
    throw InsufficientDataError(std::string("floor_profile: no ") +
                                (orientation == Orientation::Vertical ? "vertical" : "horizontal") +
                                " windows for floor(s) " + missing);
  }
  if (wanted.empty()) throw InsufficientDataError("floor_profile: no windows carry a floor index");
  std::vector<FloorObservation> out;
  for (int f : wanted) {
    const auto& a = acc.at(f);
    out.push_back({f, orientation, a.first / static_cast<double>(a.second)});
  }
  return out;
}

enum class SlopeSign { Positive, Negative, Flat };

inline std::string_view slope_sign_name(SlopeSign s) {
  switch (s) {
    case SlopeSign::Positive: return "positive";
    case SlopeSign::Negative: return "negative";
    case SlopeSign::Flat: return "flat";
  }
  return "?";
}

struct HeightAnalysis {
  FitResult fit;
  SlopeSign verdict = SlopeSign::Flat;
  std::optional<SlopeSign> expected;
  bool mismatch = false;
};

/// |slope| below `flat_tolerance` counts as flat.
inline HeightAnalysis height_analysis(const std::vector<FloorObservation>& obs,
                                      std::optional<SlopeSign> expected = std::nullopt,
                                      double flat_tolerance = 1e-6) {
  std::vector<Point> pts;
  pts.reserve(obs.size());
  for (const auto& o : obs) pts.push_back({static_cast<double>(o.floor_index), o.mean_amplitude});
  HeightAnalysis h;
  h.fit = linear_fit(pts);
  if (std::abs(h.fit.slope) < flat_tolerance) {
    h.verdict = SlopeSign::Flat;
  } else {
    h.verdict = h.fit.slope > 0.0 ? SlopeSign::Positive : SlopeSign::Negative;
  }
  h.expected = expected;
  h.mismatch = expected && *expected != h.verdict;
  return h;
}

/// `mean_amplitude = <m> * floor_index + <c>`
inline std::string format_equation(const FitResult& f, int precision = 2) {
  auto fmt = [precision](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return std::string(buf);
  };
  return "mean_amplitude = " + fmt(f.slope) + " * floor_index + " + fmt(f.intercept);
}

}  // namespace vibesense
