// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "telemetry_harness.hpp"
#include "vibesense/vibesense.hpp"

using namespace vibesense;

namespace {

// Pinned tolerances and budgets.
constexpr double kCrestTol = 0.01;
constexpr double kFeatureRelTol = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kKnnMinAccuracy = 0.85;
constexpr double kCnnMinAccuracy = 0.90;
constexpr double kCnnVsKnnSlack = 0.02;
constexpr std::size_t kCnnEpochs = 300;
constexpr double kSlopeRelTol = 0.15;
constexpr int kSignMinSeeds = 95;
constexpr int kSpectralMinSeeds = 95;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

Outcome crest_table() {
  double worst = 0;
  for (const auto& row : oracle::kSampleTable) {
    worst = std::max(worst, std::abs(row.max / row.rms - row.crest));
  }
  std::ostringstream os;
  os << "max |max/rms - crest| = " << worst;
  return {worst <= kCrestTol, os.str()};
}

Outcome feature_selection() {
  std::istringstream is(oracle::kCorrelationCsv);
  const auto mask = select_features(read_correlation_csv(is), SelectionRule{0.4, 0.00005});
  std::string names;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (mask[j]) names += std::string(names.empty() ? "" : ",") + std::string(kFeatureKeys[j]);
  }
  return {mask == kSelectedFive, "selected {" + names + "}"};
}

Outcome feature_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0, worst_identity = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 4 + rng() % 1600;
    std::uniform_int_distribution<int> u(0, static_cast<int>(1 + rng() % 1023));
    std::vector<int> x(n);
    for (auto& v : x) v = u(rng);
    const auto f = compute_features(std::span<const int>(x)).to_array();
    const auto ref = oracle::as_array(oracle::naive_features(x));
    for (std::size_t j = 0; j < kNumFeatures; ++j) worst = std::max(worst, oracle::mixed_err(f[j], ref[j]));
    const double mean = f[0], sd = f[3], rms = f[6];
    worst_identity = std::max(worst_identity, oracle::rel_err(sd * sd + mean * mean, rms * rms));
  }
  std::ostringstream os;
  os << "max relative error " << worst << ", identity error " << worst_identity;
  return {worst < kFeatureRelTol && worst_identity < kFeatureRelTol, os.str()};
}

Outcome shape_conformance() {
  cnn::CnnHyperparams hp;
  hp.base_filters = 32;
  hp.kernel_length = 3;
  const auto trace = cnn::shape_trace(hp);
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {
      {1, 12}, {12, 32}, {12, 64}, {12, 128}, {12, 256}, {12, 512}, {1, 512}, {1, 5}};
  bool ok = trace.size() == expected.size();
  for (std::size_t i = 0; ok && i < trace.size(); ++i) {
    ok = trace[i].rows == expected[i].first && trace[i].cols == expected[i].second;
  }
  // The forward pass must agree with the trace.
  auto model = cnn::CnnModel<double>::init(hp, 1);
  std::vector<double> x(2 * kNumFeatures, 0.5);
  const auto c = cnn::forward(model, x, 2);
  ok = ok && c.probs.size() == 2 * kNumClasses;
  const auto grid = cnn::HyperGrid::full().size();
  ok = ok && grid == 256;
  std::ostringstream os;
  os << "trace";
  for (const auto& s : trace) os << ' ' << s.rows << 'x' << s.cols;
  os << ", grid " << grid;
  return {ok, os.str()};
}

Outcome gradient_check() {
  cnn::CnnHyperparams hp;
  hp.base_filters = 4;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    worst = std::max(worst, gradcheck::max_relative_error(hp, seed, kGradStep));
  }
  std::ostringstream os;
  os << "max relative error " << worst << " over 5 seeds";
  return {worst < kGradRelTol, os.str()};
}

Outcome plateau_decay() {
  // Scheduler alone, then through training with a constant validation signal.
  cnn::PlateauScheduler s(0.01, 0.8, 10);
  for (int e = 1; e <= 35; ++e) s.step(0.5);
  const double target = 0.01 * 0.8 * 0.8 * 0.8;

  Matrix tx;
  std::vector<int> ty;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> r(kNumFeatures);
    for (auto& v : r) v = g(rng);
    tx.push_back(r);
    ty.push_back(1);
  }
  cnn::CnnHyperparams hp;
  hp.base_filters = 4;
  hp.batch_size = 10;
  hp.epochs = 36;
  const auto m = cnn::train<double>(tx, ty, {tx[0]}, {1}, hp, 4);
  const bool constant_val =
      std::all_of(m.history.begin(), m.history.end(), [&](const auto& e) { return e.val_accuracy == 1.0; });
  std::ostringstream os;
  os.precision(17);
  os << "scheduler lr " << s.lr() << ", training lr at epoch 36 " << m.history.back().lr;
  return {s.lr() == target && constant_val && m.history.back().lr == target, os.str()};
}

Outcome end_to_end() {
  const std::uint64_t seed = 7;
  const auto windows = simulate_corpus(kDefaultCorpusSize, default_profiles(), FrontEndConfig{}, seed);
  const auto ds = features_of(windows);
  const auto outer = split(ds, {0.8, 0.2}, seed, true);
  const auto tr = ds.subset(outer[0]);
  const auto te = ds.subset(outer[1]);
  const auto te_y = label_indices(te);

  const auto sw = sweep_k(tr, kSelectedFive, 1, 30, 10, seed);
  const auto knn = KnnModel::fit(tr, kSelectedFive);
  std::vector<int> kp;
  for (const auto& r : te.rows) kp.push_back(knn.predict(project(r, kSelectedFive), sw.best_k));
  const double knn_acc = evaluate(kp, te_y).accuracy;

  const auto inner = split(tr, {0.875, 0.125}, seed + 1, true);
  const auto fit = tr.subset(inner[0]);
  const auto val = tr.subset(inner[1]);
  cnn::CnnHyperparams hp;
  hp.batch_size = 100;
  hp.kernel_length = 3;
  hp.base_filters = 32;
  hp.activation = cnn::Activation::ELU;
  hp.epochs = kCnnEpochs;
  const auto model = cnn::train<float>(project(fit, kAllFeatures), label_indices(fit), project(val, kAllFeatures),
                                       label_indices(val), hp, seed, cnn::TrainOptions{true, {}});
  const double cnn_acc = cnn::accuracy(model, project(te, kAllFeatures), te_y);

  std::ostringstream os;
  os << "k-NN (k=" << sw.best_k << ") " << knn_acc << ", CNN " << cnn_acc << " after " << model.history.size()
     << " epochs, test n=" << te.size();
  return {knn_acc >= kKnnMinAccuracy && cnn_acc >= kCnnMinAccuracy && cnn_acc >= knn_acc - kCnnVsKnnSlack, os.str()};
}

std::vector<FloorObservation> law_data(const BuildingLaw& law, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1.0);
  std::vector<FloorObservation> obs;
  for (int f = 0; f <= 10; ++f) obs.push_back({f, law.orientation, law.slope * f + law.intercept + g(rng)});
  return obs;
}

Outcome height_fit() {
  std::vector<double> slopes;
  int positive = 0, negative = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto up = height_analysis(law_data(laws::kVertical5Storey, 1000 + s));
    slopes.push_back(up.fit.slope);
    positive += up.verdict == SlopeSign::Positive;
    negative += height_analysis(law_data(laws::kHorizontal5Storey, 5000 + s)).verdict == SlopeSign::Negative;
  }
  std::sort(slopes.begin(), slopes.end());
  const double median = 0.5 * (slopes[49] + slopes[50]);
  std::ostringstream os;
  os << "median slope " << median << ", positive " << positive << "/100, negative " << negative << "/100";
  return {std::abs(median - 4.46) <= kSlopeRelTol * 4.46 && positive >= kSignMinSeeds && negative >= kSignMinSeeds,
          os.str()};
}

Outcome spectral() {
  int broadband_ok = 0, planted_ok = 0;
  const FrontEndConfig cfg;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto cls = kAllClasses[s % kNumClasses];
    const auto w = synth_window(default_profile(cls), cfg, 77 + s);
    broadband_ok += spectral_profile(w).dominance_ratio < kDominanceThreshold;

    std::mt19937_64 rng(900 + s);
    std::normal_distribution<double> g(0, 3.0);
    RawWindow p;
    const std::size_t n = cfg.window_length();
    const double bin = static_cast<double>(5 + s % 50);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = 200 + 40 * std::sin(2 * std::numbers::pi * bin * static_cast<double>(i) / static_cast<double>(n)) + g(rng);
      p.samples.push_back(static_cast<int>(std::lround(std::clamp(v, 0.0, 1023.0))));
    }
    planted_ok += spectral_profile(p).dominance_ratio > kDominanceThreshold;
  }
  std::ostringstream os;
  os << "broadband below threshold " << broadband_ok << "/100, planted above " << planted_ok << "/100";
  return {broadband_ok >= kSpectralMinSeeds && planted_ok == 100, os.str()};
}

Outcome telemetry_durability() {
  using namespace telemetry;
  bool ok = true;
  std::ostringstream os;

  const auto store = harness::temp_path("acceptance_store");
  {
    IngestService svc(store);
    const int port = svc.bind("127.0.0.1", 0);
    svc.start();
    std::atomic<int> created{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 10; ++t) {
      threads.emplace_back([&, t] {
        std::mt19937_64 rng(t);
        httplib::Client c("127.0.0.1", port);
        for (int s = 0; s < 10; ++s) {
          auto res = c.Post("/ingest", encode_record(harness::random_record(rng, "node-" + std::to_string(t), s)),
                            "application/json");
          created += res && res->status == 201;
        }
      });
    }
    for (auto& th : threads) th.join();
    httplib::Client c("127.0.0.1", port);
    std::mt19937_64 rng(3);
    auto dup = c.Post("/ingest", encode_record(harness::random_record(rng, "node-3", 9)), "application/json");
    const bool dup_409 = dup && dup->status == 409;
    svc.stop();
    const auto scan = scan_store(store, nullptr);
    const auto sum = summarize(scan);
    bool per_node = sum.nodes.size() == 10;
    for (const auto& n : sum.nodes) per_node = per_node && n.record_count == 10;
    ok = created == 100 && scan.records.size() == 100 && per_node && dup_409;
    os << "stored " << scan.records.size() << "/100, per-node " << (per_node ? "ok" : "wrong") << ", duplicate "
       << (dup_409 ? "409" : "accepted");
  }
  std::remove(store.c_str());

  const auto kill_store = harness::temp_path("acceptance_kill");
  std::set<std::pair<std::string, std::int64_t>> acked;
  {
    harness::ForkedServer server(kill_store);
    std::mutex mu;
    std::atomic<bool> stop{false};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        std::mt19937_64 rng(50 + t);
        httplib::Client c("127.0.0.1", server.port());
        c.set_read_timeout(1, 0);
        for (int s = 0; !stop; ++s) {
          const auto r = harness::random_record(rng, "k" + std::to_string(t), s);
          auto res = c.Post("/ingest", encode_record(r), "application/json");
          if (!res) break;
          if (res->status == 201) {
            std::lock_guard lock(mu);
            acked.insert({r.node_id, r.seq});
          }
        }
      });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    server.kill();
    stop = true;
    for (auto& th : threads) th.join();
  }
  std::size_t lost = 0;
  {
    std::set<std::pair<std::string, std::int64_t>> stored;
    for (const auto& r : scan_store(kill_store, nullptr).records) stored.insert({r.node_id, r.seq});
    for (const auto& a : acked) lost += stored.count(a) == 0;
  }
  std::remove(kill_store.c_str());
  ok = ok && !acked.empty() && lost == 0;
  os << ", kill-after-ack lost " << lost << " of " << acked.size() << " acknowledged";
  return {ok, os.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "crest factor table consistency", 1, crest_table},
      {2, "feature selection reproduction", 1, feature_selection},
      {3, "feature oracle equivalence", 10, feature_oracle},
      {4, "CNN shape conformance", 1, shape_conformance},
      {5, "gradient correctness", 120, gradient_check},
      {6, "plateau decay arithmetic", 10, plateau_decay},
      {7, "end-to-end synthetic classification", 600, end_to_end},
      {8, "height fit recovery", 30, height_fit},
      {9, "spectral pivot check", 30, spectral},
      {10, "telemetry durability and exactness", 60, telemetry_durability},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s  %2d  %-40s %8.2fs  %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                o.detail.c_str(), in_budget ? "" : "  [over time budget]");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
