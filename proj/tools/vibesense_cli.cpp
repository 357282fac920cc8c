// vibesense command line: one subcommand per pipeline stage.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vibesense/vibesense.hpp"

namespace fs = std::filesystem;
using namespace vibesense;

namespace {

/// Shared flags plus an optional JSON run config. Flags given on the command
/// line win over config values.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string out = "out";
  std::string config_path;
  std::string classes;
  std::size_t count = kDefaultCorpusSize;
  std::array<ClassProfile, kNumClasses> profiles = default_profiles();
  nlohmann::json raw = nlohmann::json::object();

  void load(CLI::App& app) {
    if (config_path.empty()) return;
    std::ifstream is(config_path);
    if (!is) throw IoError("cannot read config " + config_path);
    try {
      is >> raw;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!raw.is_object()) throw ConfigError("config: expected a JSON object");
    if (raw.contains("seed") && app.count("--seed") == 0) seed = raw["seed"].get<std::uint64_t>();
    if (raw.contains("out") && app.count("--out") == 0) out = raw["out"].get<std::string>();
    if (raw.contains("classes") && app.count("--classes") == 0) classes = raw["classes"].get<std::string>();
    if (raw.contains("count")) count = raw["count"].get<std::size_t>();
    if (raw.contains("profiles")) {
      for (const auto& [name, p] : raw["profiles"].items()) {
        const auto c = parse_class(name);
        if (!c) throw ConfigError("config: unknown class '" + name + "' in profiles");
        auto& prof = profiles[static_cast<std::size_t>(class_index(*c))];
        prof.base_noise_rms = p.value("base_noise_rms", prof.base_noise_rms);
        prof.impulse_rate = p.value("impulse_rate", prof.impulse_rate);
        prof.impulse_amplitude_mean = p.value("impulse_amplitude_mean", prof.impulse_amplitude_mean);
        prof.impulse_amplitude_sd = p.value("impulse_amplitude_sd", prof.impulse_amplitude_sd);
        prof.impulse_decay_tau = p.value("impulse_decay_tau", prof.impulse_decay_tau);
        prof.dc_offset = p.value("dc_offset", prof.dc_offset);
        prof.validate();
      }
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return raw.contains(key) ? raw[key].get<T>() : fallback;
  }

  std::vector<StructureClass> class_list() const {
    std::vector<StructureClass> out_list;
    if (classes.empty()) return {kAllClasses.begin(), kAllClasses.end()};
    std::stringstream ss(classes);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto c = parse_class(tok);
      if (!c) throw ConfigError("unknown class '" + tok + "'");
      out_list.push_back(*c);
    }
    return out_list;
  }

  fs::path out_dir() const {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
  if (!os) throw IoError("write failed: " + p.string());
}

FeatureMask parse_mask(const std::string& names) {
  if (names.empty() || names == "selected") return kSelectedFive;
  if (names == "all") return kAllFeatures;
  FeatureMask m{};
  std::stringstream ss(names);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    bool found = false;
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      if (tok == kFeatureKeys[j]) {
        m[j] = true;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown feature '" + tok + "'");
  }
  return m;
}

FeatureMask load_mask_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string line, joined;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    joined += (joined.empty() ? "" : ",") + line;
  }
  return parse_mask(joined);
}

std::string mask_text(const FeatureMask& m) {
  std::string s;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (m[j]) s += std::string(kFeatureKeys[j]) + "\n";
  }
  return s;
}

LabeledDataset filter_classes(const LabeledDataset& ds, const std::vector<StructureClass>& keep) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), ds.labels[i]) != keep.end()) idx.push_back(i);
  }
  return ds.subset(idx);
}

std::string confusion_svg(const Metrics& m, const std::string& title) {
  const auto norm = m.normalized_confusion();
  std::vector<std::vector<double>> v(kNumClasses, std::vector<double>(kNumClasses));
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    labels.emplace_back(class_display_name(kAllClasses[r]));
    for (std::size_t c = 0; c < kNumClasses; ++c) v[r][c] = norm[r][c];
  }
  return svg::heatmap(v, labels, title);
}

void write_confusion_csv(const fs::path& p, const Metrics& m) {
  std::ostringstream os;
  os << "true\\predicted";
  for (auto c : kAllClasses) os << ',' << class_id(c);
  os << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    os << class_id(kAllClasses[r]);
    for (std::size_t c = 0; c < kNumClasses; ++c) os << ',' << m.confusion[r][c];
    os << '\n';
  }
  write_text(p, os.str());
}

void write_metrics(const fs::path& dir, const std::string& stem, const Metrics& m, const std::string& title) {
  std::ostringstream os;
  write_metrics_csv(os, m);
  write_text(dir / (stem + "_metrics.csv"), os.str());
  write_confusion_csv(dir / (stem + "_confusion.csv"), m);
  write_text(dir / (stem + "_confusion.svg"), confusion_svg(m, title));
}

// --- stages -----------------------------------------------------------------------

void cmd_simulate(const RunConfig& rc, std::size_t count_flag) {
  const std::size_t n = count_flag ? count_flag : rc.count;
  auto windows = simulate_corpus(n, rc.profiles, FrontEndConfig{}, rc.seed);
  const auto keep = rc.class_list();
  std::erase_if(windows, [&](const RawWindow& w) {
    return std::find(keep.begin(), keep.end(), *w.source) == keep.end();
  });
  const auto path = rc.out_dir() / "corpus.csv";
  save_corpus(path.string(), windows);
  std::cout << "wrote " << windows.size() << " windows to " << path.string() << "\n";
}

void cmd_extract(const RunConfig& rc, const std::string& in) {
  const auto windows = load_corpus(in);
  const auto ds = features_of(windows);
  const auto path = rc.out_dir() / "features.csv";
  save_features_csv(path.string(), ds);
  std::cout << "wrote " << ds.size() << " feature rows to " << path.string() << "\n";
}

void cmd_spectral(const RunConfig& rc, const std::string& in, double threshold) {
  const auto windows = load_corpus(in);
  std::ostringstream os;
  os << "window,class,dominant_bin,dominant_hz,dominance_ratio,obvious_component\n";
  std::size_t obvious = 0;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const auto rep = spectral_profile(w);
    const double hz = static_cast<double>(rep.dominant_bin) * w.sample_rate_hz / static_cast<double>(w.size());
    const bool hit = rep.has_obvious_component(threshold);
    obvious += hit;
    ratios.push_back(rep.dominance_ratio);
    os << i << ',' << (w.source ? class_id(*w.source) : "-") << ',' << rep.dominant_bin << ',' << format_double(hz)
       << ',' << format_double(rep.dominance_ratio) << ',' << (hit ? 1 : 0) << '\n';
  }
  const auto dir = rc.out_dir();
  write_text(dir / "spectral.csv", os.str());
  if (!windows.empty()) {
    const auto sp = spectral_profile(windows.front());
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < sp.bin_magnitudes.size(); ++k) {
      xs.push_back(static_cast<double>(k + 1) * windows.front().sample_rate_hz / static_cast<double>(windows.front().size()));
      ys.push_back(sp.bin_magnitudes[k]);
    }
    write_text(dir / "spectrum_window0.svg", svg::line_chart(xs, ys, "Magnitude spectrum, window 0", "frequency (Hz)", "|X(f)|"));
  }
  std::cout << obvious << " of " << windows.size() << " windows have a dominant component (ratio >= "
            << format_double(threshold) << ")\n";
}

void cmd_select(const RunConfig& rc, const std::string& features_in, const std::string& correlation_in,
                double r_min, double p_max) {
  CorrelationReport rep;
  if (!correlation_in.empty()) {
    std::ifstream is(correlation_in);
    if (!is) throw IoError("cannot read " + correlation_in);
    rep = read_correlation_csv(is);
  } else {
    if (features_in.empty()) throw ConfigError("select needs --in features.csv or --correlation table.csv");
    rep = correlation_table(filter_classes(load_features_csv(features_in), rc.class_list()));
  }
  const auto mask = select_features(rep, SelectionRule{r_min, p_max});
  const auto dir = rc.out_dir();
  std::ostringstream os;
  write_correlation_csv(os, rep);
  write_text(dir / "correlation.csv", os.str());
  write_text(dir / "mask.txt", mask_text(mask));
  std::cout << "selected:";
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (mask[j]) std::cout << ' ' << kFeatureKeys[j];
  }
  std::cout << "\n";
}

FeatureMask resolve_mask(const std::string& names, const std::string& mask_file) {
  return mask_file.empty() ? parse_mask(names) : load_mask_file(mask_file);
}

void write_k_curve(const fs::path& dir, const KSweepResult& sw) {
  std::ostringstream os;
  os << "k,cv_accuracy\n";
  std::vector<double> xs;
  for (std::size_t i = 0; i < sw.accuracy.size(); ++i) {
    os << sw.k_min + i << ',' << format_double(sw.accuracy[i]) << '\n';
    xs.push_back(static_cast<double>(sw.k_min + i));
  }
  write_text(dir / "k_curve.csv", os.str());
  write_text(dir / "k_curve.svg", svg::line_chart(xs, sw.accuracy, "k-NN cross-validated accuracy", "k", "accuracy"));
}

void cmd_sweep_k(const RunConfig& rc, const std::string& in, const FeatureMask& mask, std::size_t k_max,
                 std::size_t folds) {
  const auto ds = filter_classes(load_features_csv(in), rc.class_list());
  const auto sw = sweep_k(ds, mask, 1, k_max, folds, rc.seed);
  write_k_curve(rc.out_dir(), sw);
  std::cout << "best k = " << sw.best_k << " (cv accuracy " << format_double(sw.accuracy[sw.best_k - sw.k_min])
            << ")\n";
}

void cmd_train_knn(const RunConfig& rc, const std::string& in, const FeatureMask& mask, std::size_t k_fixed,
                   std::size_t k_max, std::size_t folds) {
  const auto ds = filter_classes(load_features_csv(in), rc.class_list());
  const auto parts = split(ds, {0.8, 0.2}, rc.seed, true);
  const auto tr = ds.subset(parts[0]);
  const auto te = ds.subset(parts[1]);
  const auto dir = rc.out_dir();
  std::size_t k = k_fixed;
  if (k == 0) {
    const auto sw = sweep_k(tr, mask, 1, std::min(k_max, tr.size() - tr.size() / folds), folds, rc.seed);
    write_k_curve(dir, sw);
    k = sw.best_k;
  }
  const auto model = KnnModel::fit(tr, mask);
  std::vector<int> pred;
  for (const auto& row : te.rows) pred.push_back(model.predict(project(row, mask), k));
  const auto m = evaluate(pred, label_indices(te));
  write_metrics(dir, "knn", m, "k-NN confusion (k=" + std::to_string(k) + ")");

  const auto gnb = gnb_train(tr, mask);
  std::vector<int> gpred;
  for (const auto& row : te.rows) gpred.push_back(gnb.predict(project(row, mask)));
  const auto gm = evaluate(gpred, label_indices(te));
  write_metrics(dir, "gnb", gm, "Gaussian naive Bayes confusion");
  std::cout << "k-NN (k=" << k << ") test accuracy " << format_double(m.accuracy) << "; naive Bayes "
            << format_double(gm.accuracy) << "\n";
}

cnn::CnnHyperparams base_hp(const RunConfig& rc, std::size_t epochs) {
  cnn::CnnHyperparams hp;
  hp.epochs = epochs ? epochs : rc.get<std::size_t>("epochs", 300);
  hp.patience = rc.get<std::size_t>("patience", hp.patience);
  hp.lr0 = rc.get<double>("lr0", hp.lr0);
  return hp;
}

cnn::HyperGrid grid_from(const RunConfig& rc, bool reduced) {
  auto g = reduced ? cnn::HyperGrid::reduced() : cnn::HyperGrid::full();
  if (rc.raw.contains("grid")) {
    const auto& j = rc.raw["grid"];
    if (j.contains("batch_sizes")) g.batch_sizes = j["batch_sizes"].get<std::vector<std::size_t>>();
    if (j.contains("kernel_lengths")) g.kernel_lengths = j["kernel_lengths"].get<std::vector<std::size_t>>();
    if (j.contains("base_filters")) g.base_filters = j["base_filters"].get<std::vector<std::size_t>>();
    if (j.contains("activations")) {
      g.activations.clear();
      for (const auto& a : j["activations"]) {
        const auto act = cnn::parse_activation(a.get<std::string>());
        if (!act) throw ConfigError("config: unknown activation " + a.get<std::string>());
        g.activations.push_back(*act);
      }
    }
  }
  return g;
}

cnn::GridSearchResult run_grid(const RunConfig& rc, const LabeledDataset& ds, bool reduced, std::size_t folds,
                               std::size_t epochs, const fs::path& dir) {
  const auto grid = grid_from(rc, reduced);
  const auto res = cnn::grid_search<float>(ds, grid, base_hp(rc, epochs), folds, rc.seed);
  std::ostringstream os;
  os << "rank,batch_size,kernel_length,base_filters,activation,mean_accuracy";
  for (std::size_t f = 0; f < folds; ++f) os << ",fold" << f;
  os << '\n';
  for (std::size_t r = 0; r < res.ranking.size(); ++r) {
    const auto& c = res.combos[res.ranking[r]];
    os << r + 1 << ',' << c.hp.batch_size << ',' << c.hp.kernel_length << ',' << c.hp.base_filters << ','
       << cnn::activation_name(c.hp.activation) << ',' << format_double(c.mean_accuracy);
    for (double a : c.fold_accuracy) os << ',' << format_double(a);
    os << '\n';
  }
  write_text(dir / "grid.csv", os.str());
  std::map<std::string, std::ostringstream> per_param;
  for (const auto& m : res.marginals()) {
    auto& s = per_param[m.parameter];
    if (s.tellp() == 0) s << "value,accuracy\n";
    s << m.value << ',' << format_double(m.accuracy) << '\n';
  }
  for (auto& [name, s] : per_param) write_text(dir / ("density_" + name + ".csv"), s.str());
  return res;
}

void cmd_grid_search(const RunConfig& rc, const std::string& in, bool reduced, std::size_t folds,
                     std::size_t epochs) {
  const auto ds = filter_classes(load_features_csv(in), rc.class_list());
  const auto res = run_grid(rc, ds, reduced, folds, epochs, rc.out_dir());
  const auto& b = res.best();
  std::cout << "best: batch " << b.batch_size << ", kernel " << b.kernel_length << ", filters " << b.base_filters
            << ", " << cnn::activation_name(b.activation) << " (cv accuracy "
            << format_double(res.combos[res.winner].mean_accuracy) << ")\n";
}

void cmd_train_cnn(const RunConfig& rc, const std::string& in, bool reduced, std::size_t folds, std::size_t epochs,
                   std::size_t grid_epochs) {
  const auto ds = filter_classes(load_features_csv(in), rc.class_list());
  const auto dir = rc.out_dir();
  auto hp = base_hp(rc, epochs);
  if (reduced) {
    const auto res = run_grid(rc, ds, true, folds, grid_epochs, dir);
    const auto& b = res.best();
    hp.batch_size = b.batch_size;
    hp.kernel_length = b.kernel_length;
    hp.base_filters = b.base_filters;
    hp.activation = b.activation;
  }
  std::vector<std::size_t> test_idx;
  const auto model = cnn::train<float>(ds, hp, rc.seed, &test_idx, cnn::TrainOptions{true, {}});
  cnn::save_checkpoint((dir / "cnn_checkpoint.json").string(), model);

  std::ostringstream hist;
  hist << "epoch,train_loss,train_accuracy,val_accuracy,lr\n";
  std::vector<double> xs, train_acc;
  for (const auto& e : model.history) {
    hist << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_accuracy) << ','
         << format_double(e.val_accuracy) << ',' << format_double(e.lr) << '\n';
    xs.push_back(static_cast<double>(e.epoch));
    train_acc.push_back(e.val_accuracy);
  }
  write_text(dir / "cnn_history.csv", hist.str());
  write_text(dir / "cnn_history.svg", svg::line_chart(xs, train_acc, "CNN validation accuracy", "epoch", "accuracy"));

  const auto te = ds.subset(test_idx);
  std::vector<int> pred;
  for (const auto& p : cnn::predict_batch(model, project(te, kAllFeatures))) pred.push_back(p.argmax);
  const auto m = evaluate(pred, label_indices(te));
  write_metrics(dir, "cnn", m, "CNN confusion");
  std::cout << "CNN test accuracy " << format_double(m.accuracy) << " after " << model.history.size()
            << " epochs\n";
}

void cmd_fit_height(const RunConfig& rc, const std::string& in, std::size_t windows_per_floor, double noise_sd) {
  const auto dir = rc.out_dir();
  std::ostringstream text;
  auto emit = [&](const std::string& name, const std::vector<FloorObservation>& obs) {
    const auto h = height_analysis(obs);
    text << name << ": " << format_equation(h.fit) << " (" << slope_sign_name(h.verdict) << ", residual rms "
         << format_double(h.fit.residual_rms) << ")\n";
    std::vector<double> xs, ys;
    for (const auto& o : obs) {
      xs.push_back(o.floor_index);
      ys.push_back(o.mean_amplitude);
    }
    write_text(dir / ("height_" + name + ".svg"),
               svg::scatter_fit(xs, ys, h.fit.slope, h.fit.intercept, name, "floor index", "mean amplitude (counts)"));
  };
  if (!in.empty()) {
    const auto windows = load_corpus(in);
    for (auto o : {Orientation::Vertical, Orientation::Horizontal}) {
      bool any = false;
      for (const auto& w : windows) any = any || (w.floor_index && w.orientation == o);
      if (any) emit(o == Orientation::Vertical ? "vertical" : "horizontal", floor_profile(windows, o));
    }
  } else {
    const std::pair<const char*, BuildingLaw> buildings[] = {
        {"11_storey_vertical", laws::kVertical11Storey},
        {"5_storey_vertical", laws::kVertical5Storey},
        {"11_storey_horizontal", laws::kHorizontal11Storey},
        {"5_storey_horizontal", laws::kHorizontal5Storey}};
    FrontEndConfig cfg;
    std::uint64_t s = rc.seed;
    for (const auto& [name, law] : buildings) {
      std::vector<RawWindow> ws;
      for (int f = 0; f <= 10; ++f) {
        for (std::size_t k = 0; k < windows_per_floor; ++k) ws.push_back(building_series(law, f, noise_sd, cfg, ++s));
      }
      emit(name, floor_profile(ws, law.orientation));
    }
  }
  write_text(dir / "height_fits.txt", text.str());
  std::cout << text.str();
}

void cmd_serve(const RunConfig&, const std::string& store, const std::string& bind) {
  if (store.empty()) throw ConfigError("serve needs --store");
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port");
  telemetry::IngestService svc(store);
  const int port = svc.bind(bind.substr(0, colon), static_cast<int>(parse_int(bind.substr(colon + 1))));
  std::cout << "listening on " << bind.substr(0, colon) << ":" << port << " store " << store << std::endl;
  svc.listen();
}

void cmd_emulate(const RunConfig& rc, telemetry::EmulatorConfig cfg, const std::string& cls) {
  const auto c = parse_class(cls);
  if (!c) throw ConfigError("unknown class '" + cls + "'");
  cfg.profile = rc.profiles[static_cast<std::size_t>(class_index(*c))];
  cfg.seed = rc.seed;
  if (cfg.endpoint.empty() && cfg.dry_run_path.empty()) {
    cfg.dry_run_path = (rc.out_dir() / "emulated.jsonl").string();
  }
  const auto rep = telemetry::node_emulator(cfg);
  std::cout << "delivered " << rep.delivered << " records, " << rep.retries << " retries, " << rep.duplicates
            << " already stored\n";
}

void cmd_report(const RunConfig& rc, const std::string& store) {
  if (store.empty()) throw ConfigError("report needs --store");
  const auto scan = telemetry::scan_store(store, &std::cerr);
  const auto sum = telemetry::summarize(scan);
  std::ostringstream nodes, classes;
  nodes << "node_id,record_count,last_seq,last_seen_ms\n";
  for (const auto& n : sum.nodes) {
    nodes << n.node_id << ',' << n.record_count << ',' << n.last_seq << ',' << n.last_seen_ms << '\n';
  }
  classes << "class,records\n";
  for (auto c : kAllClasses) classes << class_id(c) << ',' << sum.per_class[static_cast<std::size_t>(class_index(c))] << '\n';
  classes << "unlabeled," << sum.unlabeled << '\n';
  classes << "total," << sum.total << '\n';
  const auto dir = rc.out_dir();
  write_text(dir / "report_nodes.csv", nodes.str());
  write_text(dir / "report_classes.csv", classes.str());
  std::cout << nodes.str() << classes.str();
  if (sum.skipped_lines) std::cout << "skipped lines: " << sum.skipped_lines << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vibesense: structure classification from ambient vibration"};
  app.require_subcommand(1);
  RunConfig rc;
  app.add_option("--seed", rc.seed, "Random seed")->capture_default_str();
  app.add_option("--out", rc.out, "Output directory")->capture_default_str();
  app.add_option("--config", rc.config_path, "JSON run config");
  app.add_option("--classes", rc.classes, "Comma-separated class ids to keep");

  std::string in, correlation, mask_spec, mask_file, store, bind = "127.0.0.1:8080", cls = "building";
  std::size_t count = 0, k = 0, k_max = 30, folds = 10, cnn_folds = 3, epochs = 0, grid_epochs = 30, per_floor = 4;
  double r_min = 0.4, p_max = 0.00005, threshold = kDominanceThreshold, noise_sd = 1.0;
  bool reduced = false;
  telemetry::EmulatorConfig emu;
  double emu_interval = emu.interval_s;

  auto* sim = app.add_subcommand("simulate", "Generate a labeled window corpus");
  sim->add_option("--count", count, "Number of windows (default 1159)");

  auto* ext = app.add_subcommand("extract", "Compute the 12 features per window");
  ext->add_option("--in", in, "Corpus CSV")->required();

  auto* spc = app.add_subcommand("spectral-check", "Dominant-frequency report per window");
  spc->add_option("--in", in, "Corpus CSV")->required();
  spc->add_option("--threshold", threshold, "Dominance ratio threshold");

  auto* sel = app.add_subcommand("select", "Correlation table and feature mask");
  sel->add_option("--in", in, "Features CSV");
  sel->add_option("--correlation", correlation, "Existing correlation CSV");
  sel->add_option("--r-min", r_min);
  sel->add_option("--p-max", p_max);

  auto add_mask = [&](CLI::App* sc) {
    sc->add_option("--in", in, "Features CSV")->required();
    sc->add_option("--features", mask_spec, "selected | all | comma-separated keys");
    sc->add_option("--mask", mask_file, "mask.txt written by select");
    sc->add_option("--folds", folds);
  };
  auto* knn = app.add_subcommand("train-knn", "k-NN and naive Bayes on an 80/20 split");
  add_mask(knn);
  knn->add_option("--k", k, "Fixed k (0 sweeps 1..k-max)");
  knn->add_option("--k-max", k_max);
  auto* swk = app.add_subcommand("sweep-k", "Cross-validated accuracy for k = 1..k-max");
  add_mask(swk);
  swk->add_option("--k-max", k_max);

  auto* tcnn = app.add_subcommand("train-cnn", "Train the 1-D CNN");
  tcnn->add_option("--in", in, "Features CSV")->required();
  tcnn->add_flag("--reduced-grid", reduced, "Pick hyperparameters from the 16-combo grid first");
  tcnn->add_option("--epochs", epochs, "Training epochs (default 300)");
  tcnn->add_option("--grid-epochs", grid_epochs, "Epochs per grid combo");
  tcnn->add_option("--folds", cnn_folds, "Grid folds");

  auto* grid = app.add_subcommand("grid-search", "Cross-validated hyperparameter grid");
  grid->add_option("--in", in, "Features CSV")->required();
  grid->add_flag("--reduced-grid", reduced, "16-combo grid instead of 256");
  grid->add_option("--epochs", epochs, "Epochs per combo");
  grid->add_option("--folds", cnn_folds);

  auto* fit = app.add_subcommand("fit-height", "Fit amplitude against floor index");
  fit->add_option("--in", in, "Corpus CSV with floor/orientation tags (default: simulate buildings)");
  fit->add_option("--windows-per-floor", per_floor);
  fit->add_option("--noise", noise_sd, "Per-sample noise in counts");

  auto* srv = app.add_subcommand("serve", "Run the ingestion service");
  srv->add_option("--store", store, "JSON-lines store")->required();
  srv->add_option("--bind", bind, "host:port")->capture_default_str();

  auto* emul = app.add_subcommand("emulate-node", "Emit feature records like a field node");
  emul->add_option("--endpoint", emu.endpoint, "http://host:port");
  emul->add_option("--dry-run", emu.dry_run_path, "Append to this file instead of posting");
  emul->add_option("--node-id", emu.node_id);
  emul->add_option("--site", emu.site);
  emul->add_option("--class", cls);
  emul->add_option("--count", emu.count);
  emul->add_option("--interval", emu_interval, "Seconds between windows");
  emul->add_option("--max-retries", emu.max_retries);

  auto* rep = app.add_subcommand("report", "Summarize a telemetry store");
  rep->add_option("--store", store, "JSON-lines store")->required();

  CLI11_PARSE(app, argc, argv);

  auto* sc = app.get_subcommands().front();
  const std::string stage = sc->get_name();
  try {
    rc.load(app);
    if (sc == sim) cmd_simulate(rc, count);
    else if (sc == ext) cmd_extract(rc, in);
    else if (sc == spc) cmd_spectral(rc, in, threshold);
    else if (sc == sel) cmd_select(rc, in, correlation, r_min, p_max);
    else if (sc == knn) cmd_train_knn(rc, in, resolve_mask(mask_spec, mask_file), k, k_max, folds);
    else if (sc == swk) cmd_sweep_k(rc, in, resolve_mask(mask_spec, mask_file), k_max, folds);
    else if (sc == tcnn) cmd_train_cnn(rc, in, reduced, cnn_folds, epochs, grid_epochs);
    else if (sc == grid) cmd_grid_search(rc, in, reduced, cnn_folds, epochs ? epochs : grid_epochs);
    else if (sc == fit) cmd_fit_height(rc, in, per_floor, noise_sd);
    else if (sc == srv) cmd_serve(rc, store, bind);
    else if (sc == emul) {
      emu.interval_s = emu_interval;
      cmd_emulate(rc, emu, cls);
    } else if (sc == rep) cmd_report(rc, store);
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
