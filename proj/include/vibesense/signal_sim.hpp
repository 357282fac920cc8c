#pragma once

// Synthetic piezo vibration windows and a model of the analog front end
// (amplifier gain, clipping, n-bit quantization).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vibesense/core.hpp"

namespace vibesense {

struct FrontEndConfig {
  double gain = 100.0;
  double vref = 5.0;
  int adc_bits = 10;
  double sample_rate_hz = 200.0;
  double window_s = 8.0;

  int full_scale() const { return (1 << adc_bits) - 1; }

  std::size_t window_length() const {
    return static_cast<std::size_t>(std::llround(sample_rate_hz * window_s));
  }

  void validate() const {
    if (adc_bits < 1 || adc_bits > 16) throw ConfigError("adc_bits must be in [1, 16]");
    if (!(gain > 0.0)) throw ConfigError("gain must be > 0");
    if (!(vref > 0.0)) throw ConfigError("vref must be > 0");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be > 0");
    if (!(window_s > 0.0)) throw ConfigError("window_s must be > 0");
  }
};

/// Generative parameters for one structure class, all in ADC counts.
struct ClassProfile {
  StructureClass cls = StructureClass::Building;
  double base_noise_rms = 0.0;
  double impulse_rate = 0.0;  // events per second
  double impulse_amplitude_mean = 0.0;
  double impulse_amplitude_sd = 0.0;
  double impulse_decay_tau = 0.1;  // seconds
  double dc_offset = 0.0;

  void validate() const {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!finite_nonneg(base_noise_rms) || !finite_nonneg(impulse_amplitude_mean) ||
        !finite_nonneg(impulse_amplitude_sd) || !finite_nonneg(dc_offset)) {
      throw ConfigError("profile amplitude fields must be finite and >= 0");
    }
    if (!finite_nonneg(impulse_rate)) throw ConfigError("impulse_rate must be >= 0");
    if (!(impulse_decay_tau > 0.0) || !std::isfinite(impulse_decay_tau)) {
      throw ConfigError("impulse_decay_tau must be > 0");
    }
  }
};

struct RawWindow {
  std::vector<int> samples;
  double sample_rate_hz = 200.0;
  int adc_bits = 10;
  std::optional<StructureClass> source;
  std::optional<int> floor_index;
  std::optional<Orientation> orientation;

  std::size_t size() const { return samples.size(); }

  double mean() const {
    if (samples.empty()) return 0.0;
    double s = 0.0;
    for (int v : samples) s += v;
    return s / static_cast<double>(samples.size());
  }
};

/// Floor-height relation `mean_amplitude = slope * floor_index + intercept`.
struct BuildingLaw {
  double slope = 0.0;
  double intercept = 0.0;
  Orientation orientation = Orientation::Vertical;
};

// Fitted relations reported for the two surveyed buildings.
namespace laws {
inline constexpr BuildingLaw kVertical11Storey{0.12, 20.3, Orientation::Vertical};
inline constexpr BuildingLaw kVertical5Storey{4.46, 21.2, Orientation::Vertical};
inline constexpr BuildingLaw kHorizontal11Storey{-0.2, 28.2, Orientation::Horizontal};
inline constexpr BuildingLaw kHorizontal5Storey{-0.6, 29.9, Orientation::Horizontal};
}  // namespace laws

/// Quantize one analog value (volts at the amplifier input). Rounds half away
/// from zero, then clamps to [0, 2^bits - 1].
inline int quantize(double volts, const FrontEndConfig& cfg) {
  const double fs = cfg.full_scale();
  const double code = std::round(volts * cfg.gain / cfg.vref * fs);
  if (code <= 0.0) return 0;
  if (code >= fs) return static_cast<int>(fs);
  return static_cast<int>(code);
}

inline RawWindow front_end(std::span<const double> analog, const FrontEndConfig& cfg) {
  cfg.validate();
  RawWindow w;
  w.sample_rate_hz = cfg.sample_rate_hz;
  w.adc_bits = cfg.adc_bits;
  w.samples.reserve(analog.size());
  for (double v : analog) {
    if (!std::isfinite(v)) throw InvalidSignalError("front_end: non-finite analog sample");
    w.samples.push_back(quantize(v, cfg));
  }
  return w;
}

/// Volts at the amplifier input that map to `counts` before rounding.
inline double counts_to_volts(double counts, const FrontEndConfig& cfg) {
  return counts * cfg.vref / (cfg.gain * cfg.full_scale());
}

/// Pre-quantization signal in ADC counts: DC + Gaussian background + a Poisson
/// train of exponentially decaying impulses.
inline std::vector<double> synth_counts(const ClassProfile& profile, const FrontEndConfig& cfg,
                                        std::uint64_t seed) {
  profile.validate();
  cfg.validate();
  const std::size_t n = cfg.window_length();
  const double dt = 1.0 / cfg.sample_rate_hz;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<double> x(n, profile.dc_offset);
  if (profile.base_noise_rms > 0.0) {
    for (auto& v : x) v += profile.base_noise_rms * unit(rng);
  }

  if (profile.impulse_rate > 0.0 && profile.impulse_amplitude_mean + profile.impulse_amplitude_sd > 0.0) {
    std::exponential_distribution<double> gap(profile.impulse_rate);
    const double tau = profile.impulse_decay_tau;
    // Start early so impulses that began before the window still decay into it.
    const double t_start = -8.0 * tau;
    const double t_end = static_cast<double>(n) * dt;
    for (double t = t_start + gap(rng); t < t_end; t += gap(rng)) {
      const double amp = std::max(0.0, profile.impulse_amplitude_mean +
                                           profile.impulse_amplitude_sd * unit(rng));
      auto first = static_cast<std::ptrdiff_t>(std::ceil(t / dt));
      first = std::max<std::ptrdiff_t>(first, 0);
      const auto last = static_cast<std::ptrdiff_t>(
          std::min(static_cast<double>(n), std::ceil((t + 12.0 * tau) / dt)));
      for (std::ptrdiff_t i = first; i < last; ++i) {
        x[static_cast<std::size_t>(i)] += amp * std::exp(-(static_cast<double>(i) * dt - t) / tau);
      }
    }
  }
  return x;
}

inline RawWindow synth_window(const ClassProfile& profile, const FrontEndConfig& cfg,
                              std::uint64_t seed) {
  const auto counts = synth_counts(profile, cfg, seed);
  std::vector<double> volts(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) volts[i] = counts_to_volts(counts[i], cfg);
  RawWindow w = front_end(volts, cfg);
  w.source = profile.cls;
  return w;
}

inline RawWindow building_series(const BuildingLaw& law, int floor_index, double noise_sd,
                                 const FrontEndConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (floor_index < 0) throw ConfigError("floor_index must be >= 0");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be >= 0");
  const double expected = law.slope * floor_index + law.intercept;
  if (!std::isfinite(expected) || expected < 0.0 || expected > cfg.full_scale()) {
    throw ProfileRangeError("building_series: expected mean " + format_double(expected) +
                            " outside ADC range");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t n = cfg.window_length();
  std::vector<double> volts(n);
  for (auto& v : volts) {
    const double c = noise_sd > 0.0 ? expected + noise_sd * unit(rng) : expected;
    v = counts_to_volts(c, cfg);
  }
  RawWindow w = front_end(volts, cfg);
  w.source = StructureClass::Building;
  w.floor_index = floor_index;
  w.orientation = law.orientation;
  return w;
}

/// Default per-class profiles. Calibrated so the grand mean of window means
/// lands near the per-class targets (Building ~20, Flyover ~28,
/// Railline ~63, Steel overbridge ~155, Concrete overbridge ~25 counts).
inline ClassProfile default_profile(StructureClass c) {
  switch (c) {
    case StructureClass::Building:
      return {c, 7.0, 3.0, 80.0, 40.0, 0.005, 19.0};
    case StructureClass::Flyover:
      return {c, 55.0, 5.0, 300.0, 100.0, 0.005, 0.0};
    case StructureClass::Railline:
      return {c, 1.5, 0.2, 10.0, 5.0, 0.005, 63.0};
    case StructureClass::SteelOverbridge:
      return {c, 320.0, 8.0, 700.0, 300.0, 0.005, 0.0};
    case StructureClass::ConcreteOverbridge:
      return {c, 40.0, 6.0, 300.0, 100.0, 0.005, 0.0};
  }
  throw ConfigError("unknown class");
}

// --- RawWindow CSV -----------------------------------------------------------
//
//   # rate_hz=200 class=building floor=3 orient=v
//   t_index,adc
//   0,21
//   ...

inline void write_window_csv(std::ostream& os, const RawWindow& w) {
  os << "# rate_hz=" << std::llround(w.sample_rate_hz)
     << " class=" << (w.source ? std::string(class_id(*w.source)) : std::string("-"))
     << " floor=" << (w.floor_index ? std::to_string(*w.floor_index) : std::string("-"))
     << " orient=" << (w.orientation ? std::string(1, orientation_code(*w.orientation)) : std::string("-"))
     << "\n";
  os << "t_index,adc\n";
  for (std::size_t i = 0; i < w.samples.size(); ++i) os << i << ',' << w.samples[i] << '\n';
}

inline RawWindow read_window_csv(std::istream& is) {
  RawWindow w;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
    throw SchemaError("window csv: missing '# rate_hz=...' comment line");
  }
  std::istringstream meta(line.substr(2));
  std::string tok;
  bool have_rate = false;
  while (meta >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw SchemaError("window csv: bad metadata token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "rate_hz") {
      w.sample_rate_hz = static_cast<double>(parse_int(val));
      have_rate = true;
    } else if (key == "class") {
      if (val != "-") {
        auto c = parse_class(val);
        if (!c) throw SchemaError("window csv: unknown class '" + val + "'");
        w.source = *c;
      }
    } else if (key == "floor") {
      if (val != "-") w.floor_index = static_cast<int>(parse_int(val));
    } else if (key == "orient") {
      if (val != "-") {
        auto o = parse_orientation(val);
        if (!o) throw SchemaError("window csv: unknown orientation '" + val + "'");
        w.orientation = *o;
      }
    }
  }
  if (!have_rate) throw SchemaError("window csv: rate_hz missing");
  if (!std::getline(is, line) || line != "t_index,adc") {
    throw SchemaError("window csv: expected header 't_index,adc'");
  }
  std::size_t expected_index = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw SchemaError("window csv: malformed row '" + line + "'");
    const auto idx = parse_int(std::string_view(line).substr(0, comma));
    if (idx != static_cast<std::int64_t>(expected_index)) {
      throw SchemaError("window csv: t_index out of sequence at row " + std::to_string(expected_index));
    }
    const auto adc = parse_int(std::string_view(line).substr(comma + 1));
    if (adc < 0 || adc > (1 << 16) - 1) throw SchemaError("window csv: adc value out of range");
    w.samples.push_back(static_cast<int>(adc));
    ++expected_index;
  }
  return w;
}

inline void save_window(const std::string& path, const RawWindow& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_window_csv(os, w);
  if (!os) throw IoError("write failed: " + path);
}

inline RawWindow load_window(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return read_window_csv(is);
}


// --- labeled corpus -------------------------------------------------------------

inline constexpr std::size_t kDefaultCorpusSize = 1159;

/// Window i of class c is seeded from (seed, i); classes get n/5 windows each
/// with the remainder going to the lowest class indices.
inline std::vector<RawWindow> simulate_corpus(std::size_t n, const std::array<ClassProfile, kNumClasses>& profiles,
                                              const FrontEndConfig& cfg, std::uint64_t seed) {
  std::vector<RawWindow> out;
  out.reserve(n);
  std::size_t i = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::size_t count = n / kNumClasses + (static_cast<std::size_t>(c) < n % kNumClasses ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k, ++i) {
      std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      out.push_back(synth_window(profiles[static_cast<std::size_t>(c)], cfg, z ^ (z >> 31)));
    }
  }
  return out;
}

inline std::array<ClassProfile, kNumClasses> default_profiles() {
  std::array<ClassProfile, kNumClasses> p;
  for (auto c : kAllClasses) p[static_cast<std::size_t>(class_index(c))] = default_profile(c);
  return p;
}

//   window,class,floor,orient,rate_hz,samples
//   0,building,-,-,200,21 19 22 ...
inline void write_corpus_csv(std::ostream& os, const std::vector<RawWindow>& ws) {
  os << "window,class,floor,orient,rate_hz,samples\n";
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto& w = ws[i];
    os << i << ',' << (w.source ? std::string(class_id(*w.source)) : std::string("-")) << ','
       << (w.floor_index ? std::to_string(*w.floor_index) : std::string("-")) << ','
       << (w.orientation ? std::string(1, orientation_code(*w.orientation)) : std::string("-")) << ','
       << std::llround(w.sample_rate_hz) << ',';
    for (std::size_t k = 0; k < w.samples.size(); ++k) os << (k ? " " : "") << w.samples[k];
    os << '\n';
  }
}

inline std::vector<RawWindow> read_corpus_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "window,class,floor,orient,rate_hz,samples") {
    throw SchemaError("corpus csv: bad header");
  }
  std::vector<RawWindow> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw SchemaError("corpus csv: row " + std::to_string(row) + " needs 6 cells");
    RawWindow w;
    if (cells[1] != "-") {
      auto c = parse_class(cells[1]);
      if (!c) throw SchemaError("corpus csv: unknown class '" + cells[1] + "' at row " + std::to_string(row));
      w.source = *c;
    }
    if (cells[2] != "-") w.floor_index = static_cast<int>(parse_int(cells[2]));
    if (cells[3] != "-") {
      auto o = parse_orientation(cells[3]);
      if (!o) throw SchemaError("corpus csv: unknown orientation at row " + std::to_string(row));
      w.orientation = *o;
    }
    w.sample_rate_hz = static_cast<double>(parse_int(cells[4]));
    std::istringstream samples(cells[5]);
    std::string tok;
    while (samples >> tok) w.samples.push_back(static_cast<int>(parse_int(tok)));
    out.push_back(std::move(w));
  }
  return out;
}

inline void save_corpus(const std::string& path, const std::vector<RawWindow>& ws) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_corpus_csv(os, ws);
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<RawWindow> load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return read_corpus_csv(is);
}

}  // namespace vibesense
