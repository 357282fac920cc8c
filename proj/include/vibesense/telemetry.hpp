#pragma once

// Sensor-to-server path: canonical JSON records, an append-only JSON-lines
// store, an HTTP ingestion service, and a node emulator that posts one
// feature summary per window.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vibesense/core.hpp"
#include "vibesense/features.hpp"
#include "vibesense/signal_sim.hpp"

namespace vibesense::telemetry {

struct TelemetryRecord {
  std::string node_id;
  std::int64_t timestamp_ms = 0;
  std::int64_t seq = 0;
  FeatureVector features;
  std::optional<StructureClass> label;
  std::optional<std::string> site;

  bool operator==(const TelemetryRecord&) const = default;

  void validate() const {
    if (node_id.empty()) throw SchemaError("node_id: must be non-empty");
    if (timestamp_ms <= 0) throw SchemaError("timestamp_ms: must be > 0");
    if (seq < 0) throw SchemaError("seq: must be >= 0");
    const auto a = features.to_array();
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      if (!std::isfinite(a[j])) throw SchemaError("features." + std::string(kFeatureKeys[j]) + ": non-finite");
    }
  }
};

struct NodeStatus {
  std::string node_id;
  std::int64_t last_seen_ms = 0;
  std::size_t record_count = 0;
  std::int64_t last_seq = -1;
};

// --- wire format -------------------------------------------------------------

inline nlohmann::ordered_json to_json(const TelemetryRecord& r) {
  nlohmann::ordered_json j;
  j["node_id"] = r.node_id;
  j["timestamp_ms"] = r.timestamp_ms;
  j["seq"] = r.seq;
  nlohmann::ordered_json f;
  const auto a = r.features.to_array();
  for (std::size_t k = 0; k < kNumFeatures; ++k) f[std::string(kFeatureKeys[k])] = a[k];
  j["features"] = std::move(f);
  j["label"] = r.label ? nlohmann::ordered_json(std::string(class_id(*r.label))) : nlohmann::ordered_json(nullptr);
  j["site"] = r.site ? nlohmann::ordered_json(*r.site) : nlohmann::ordered_json(nullptr);
  return j;
}

/// Canonical single-line JSON with fixed key order.
inline std::string encode_record(const TelemetryRecord& r) {
  r.validate();
  return to_json(r).dump();
}

inline TelemetryRecord from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record: expected a JSON object");
  auto require = [&](const nlohmann::json& obj, const std::string& key, const std::string& path)
      -> const nlohmann::json& {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path + ": missing");
    return *it;
  };
  TelemetryRecord r;
  const auto& node = require(j, "node_id", "node_id");
  if (!node.is_string()) throw SchemaError("node_id: expected string");
  r.node_id = node.get<std::string>();

  const auto& ts = require(j, "timestamp_ms", "timestamp_ms");
  if (!ts.is_number_integer()) throw SchemaError("timestamp_ms: expected integer");
  r.timestamp_ms = ts.get<std::int64_t>();

  const auto& seq = require(j, "seq", "seq");
  if (!seq.is_number_integer()) throw SchemaError("seq: expected integer");
  r.seq = seq.get<std::int64_t>();

  const auto& feats = require(j, "features", "features");
  if (!feats.is_object()) throw SchemaError("features: expected object");
  std::array<double, kNumFeatures> a{};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const std::string key(kFeatureKeys[k]);
    const auto& v = require(feats, key, "features." + key);
    if (!v.is_number()) throw SchemaError("features." + key + ": expected finite number");
    a[k] = v.get<double>();
  }
  r.features = FeatureVector::from_array(a);

  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError("label: expected string");
    auto c = parse_class(it->get<std::string>());
    if (!c) throw SchemaError("label: unknown structure class '" + it->get<std::string>() + "'");
    r.label = *c;
  }
  if (auto it = j.find("site"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError("site: expected string");
    r.site = it->get<std::string>();
  }
  r.validate();
  return r;
}

inline TelemetryRecord decode_record(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("record: malformed JSON (") + e.what() + ")");
  }
  return from_json(j);
}

// --- append-only store ---------------------------------------------------------

struct ScanResult {
  std::vector<TelemetryRecord> records;
  std::size_t skipped_lines = 0;
  bool torn_tail = false;
  std::vector<std::string> warnings;
};

/// Reads every complete, decodable line in append order. A final line with no
/// newline is a torn write and is skipped; so is any undecodable line.
inline ScanResult scan_store(const std::string& path, std::ostream* warn = &std::clog) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    struct stat st {};
    if (::stat(path.c_str(), &st) != 0 && errno == ENOENT) return {};
    throw IoError("cannot read store " + path);
  }
  ScanResult res;
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("read failed: " + path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    ++line_no;
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      res.torn_tail = true;
      ++res.skipped_lines;
      res.warnings.push_back("line " + std::to_string(line_no) + ": torn trailing record skipped");
      break;
    }
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      res.records.push_back(decode_record(line));
    } catch (const SchemaError& e) {
      ++res.skipped_lines;
      res.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (warn) {
    for (const auto& w : res.warnings) *warn << "warning: " << path << ": " << w << "\n";
  }
  return res;
}

/// Single-writer JSON-lines file. append() returns only after the line has
/// been written and fsync'd.
class RecordStore {
 public:
  explicit RecordStore(std::string path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open store " + path_ + ": " + std::strerror(errno));
    seal_torn_tail();
  }

  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  ~RecordStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::string& path() const { return path_; }

  void append(const TelemetryRecord& r) { append_line(encode_record(r)); }

  void append_line(std::string line) {
    line.push_back('\n');
    std::lock_guard lock(mu_);
    write_all(line);
    if (::fsync(fd_) != 0) throw IoError("fsync failed on " + path_ + ": " + std::strerror(errno));
  }

 private:
  // A crash can leave a partial last line; terminate it so the next append
  // starts on a fresh line.
  void seal_torn_tail() {
    std::ifstream is(path_, std::ios::binary | std::ios::ate);
    if (!is) return;
    const auto size = static_cast<std::streamoff>(is.tellg());
    if (size <= 0) return;
    is.seekg(size - 1);
    char last = 0;
    is.get(last);
    if (last != '\n') {
      std::lock_guard lock(mu_);
      write_all("\n");
    }
  }

  void write_all(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::write(fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("write failed on " + path_ + ": " + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::string path_;
  int fd_ = -1;
  std::mutex mu_;
};

// --- ingestion service -----------------------------------------------------------

inline nlohmann::ordered_json to_json(const NodeStatus& s) {
  return {{"node_id", s.node_id}, {"last_seen_ms", s.last_seen_ms}, {"record_count", s.record_count}};
}

/// Records sorted by (timestamp_ms, seq, node_id), filtered and truncated.
inline std::vector<TelemetryRecord> query_records(std::vector<TelemetryRecord> recs,
                                                  const std::optional<std::string>& node_id,
                                                  std::optional<std::int64_t> since_ms,
                                                  std::optional<std::size_t> limit) {
  std::erase_if(recs, [&](const TelemetryRecord& r) {
    return (node_id && r.node_id != *node_id) || (since_ms && r.timestamp_ms < *since_ms);
  });
  std::stable_sort(recs.begin(), recs.end(), [](const TelemetryRecord& a, const TelemetryRecord& b) {
    return std::tie(a.timestamp_ms, a.seq, a.node_id) < std::tie(b.timestamp_ms, b.seq, b.node_id);
  });
  if (limit && recs.size() > *limit) recs.resize(*limit);
  return recs;
}

/// HTTP front end over a RecordStore.
///   POST /ingest   201 stored | 400 schema | 409 duplicate or stale seq | 503 storage
///   GET  /nodes    NodeStatus list
///   GET  /records  ?node_id=&since_ms=&limit=
class IngestService {
 public:
  explicit IngestService(const std::string& store_path) : store_(store_path) {
    for (auto& r : scan_store(store_path).records) admit(r);
    install_routes();
  }

  IngestService(const IngestService&) = delete;
  IngestService& operator=(const IngestService&) = delete;

  ~IngestService() { stop(); }

  /// Binds and returns the bound port (`port` 0 picks a free one).
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  /// Blocks until stop() is called.
  void listen() { server_.listen_after_bind(); }

  /// Serves on a background thread.
  void start() {
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  std::vector<NodeStatus> nodes() const {
    std::lock_guard lock(mu_);
    std::vector<NodeStatus> out;
    for (const auto& [_, s] : nodes_) out.push_back(s);
    return out;
  }

  std::size_t record_count() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  /// Test hook: make the next appends fail as if the disk were unavailable.
  void simulate_storage_failure(bool on) { storage_failure_ = on; }

 private:
  void admit(const TelemetryRecord& r) {
    auto& s = nodes_[r.node_id];
    s.node_id = r.node_id;
    s.last_seen_ms = std::max(s.last_seen_ms, r.timestamp_ms);
    ++s.record_count;
    s.last_seq = std::max(s.last_seq, r.seq);
    records_.push_back(r);
  }

  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void install_routes() {
    server_.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
      TelemetryRecord r;
      try {
        r = decode_record(req.body);
      } catch (const SchemaError& e) {
        reply(res, 400, {{"error", e.what()}});
        return;
      }
      std::lock_guard lock(mu_);
      auto it = nodes_.find(r.node_id);
      if (it != nodes_.end() && r.seq <= it->second.last_seq) {
        reply(res, 409, {{"error", "duplicate or stale seq"},
                         {"node_id", r.node_id},
                         {"seq", r.seq},
                         {"last_seq", it->second.last_seq}});
        return;
      }
      try {
        if (storage_failure_) throw IoError("storage unavailable");
        store_.append(r);
      } catch (const IoError& e) {
        reply(res, 503, {{"error", e.what()}});
        return;
      }
      admit(r);
      reply(res, 201, {{"status", "stored"}, {"node_id", r.node_id}, {"seq", r.seq}});
    });

    server_.Get("/nodes", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& s : nodes()) arr.push_back(to_json(s));
      reply(res, 200, arr);
    });

    server_.Get("/records", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> node;
      std::optional<std::int64_t> since;
      std::optional<std::size_t> limit;
      try {
        if (req.has_param("node_id")) node = req.get_param_value("node_id");
        if (req.has_param("since_ms")) since = parse_int(req.get_param_value("since_ms"));
        if (req.has_param("limit")) {
          const auto l = parse_int(req.get_param_value("limit"));
          if (l < 0) throw SchemaError("limit must be >= 0");
          limit = static_cast<std::size_t>(l);
        }
      } catch (const SchemaError& e) {
        reply(res, 400, {{"error", e.what()}});
        return;
      }
      std::vector<TelemetryRecord> snapshot;
      {
        std::lock_guard lock(mu_);
        snapshot = records_;
      }
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& r : query_records(std::move(snapshot), node, since, limit)) arr.push_back(to_json(r));
      reply(res, 200, arr);
    });

    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });
  }

  RecordStore store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::map<std::string, NodeStatus> nodes_;
  std::vector<TelemetryRecord> records_;
  std::atomic<bool> storage_failure_{false};
};

/// Blocking convenience entry point; `bind_address` is "host:port".
inline void serve(const std::string& bind_address, const std::string& store_path) {
  const auto colon = bind_address.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port");
  const std::string host = bind_address.substr(0, colon);
  const int port = static_cast<int>(parse_int(bind_address.substr(colon + 1)));
  IngestService svc(store_path);
  svc.bind(host, port);
  svc.listen();
}

// --- node emulator -----------------------------------------------------------------

class DeliveryError : public Error {
 public:
  DeliveryError(const std::string& what, std::size_t delivered) : Error(what), delivered_(delivered) {}
  std::size_t delivered() const { return delivered_; }

 private:
  std::size_t delivered_;
};

struct EmulatorConfig {
  std::string node_id = "node-0";
  std::optional<std::string> site;
  ClassProfile profile = default_profile(StructureClass::Building);
  FrontEndConfig front_end;
  double interval_s = 8.0;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  bool include_label = true;
  /// "http://host:port"; empty means dry run into `dry_run_path`.
  std::string endpoint;
  std::string dry_run_path;
  std::size_t max_retries = 8;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::milliseconds request_timeout{2000};
};

struct EmulatorReport {
  std::vector<TelemetryRecord> sent;
  std::size_t delivered = 0;
  std::size_t retries = 0;
  std::size_t duplicates = 0;  // 409 answers, i.e. already stored by an earlier attempt
  std::vector<std::int64_t> tick_ms;  // wall-clock start of each tick, ms since run start
};

inline std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline std::uint64_t window_seed(std::uint64_t seed, std::uint64_t seq) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (seq + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per tick: synthesize a window, extract features, encode, deliver. Transport
/// failures and 5xx answers are retried with exponential backoff; the same seq
/// is re-sent until acknowledged, so no seq is ever skipped.
inline EmulatorReport node_emulator(const EmulatorConfig& cfg) {
  if (cfg.node_id.empty()) throw ConfigError("node_id must be non-empty");
  if (!(cfg.interval_s >= 0.0)) throw ConfigError("interval_s must be >= 0");
  if (cfg.endpoint.empty() && cfg.dry_run_path.empty()) {
    throw ConfigError("node_emulator needs an endpoint or a dry-run path");
  }
  EmulatorReport rep;
  std::optional<RecordStore> sink;
  std::optional<httplib::Client> client;
  if (cfg.endpoint.empty()) {
    sink.emplace(cfg.dry_run_path);
  } else {
    client.emplace(cfg.endpoint);
    const auto t = cfg.request_timeout;
    client->set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(t).count(),
                                   static_cast<long>((t.count() % 1000) * 1000));
    client->set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(t).count(),
                             static_cast<long>((t.count() % 1000) * 1000));
  }

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto interval = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(cfg.interval_s));
  for (std::size_t seq = 0; seq < cfg.count; ++seq) {
    std::this_thread::sleep_until(start + interval * static_cast<long>(seq));
    rep.tick_ms.push_back(
        std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start).count());

    const auto w = synth_window(cfg.profile, cfg.front_end, window_seed(cfg.seed, seq));
    TelemetryRecord r;
    r.node_id = cfg.node_id;
    r.timestamp_ms = now_ms();
    r.seq = static_cast<std::int64_t>(seq);
    r.features = extract_features(w);
    if (cfg.include_label) r.label = cfg.profile.cls;
    r.site = cfg.site;
    const auto body = encode_record(r);

    if (sink) {
      sink->append_line(body);
      ++rep.delivered;
      rep.sent.push_back(std::move(r));
      continue;
    }

    auto backoff = cfg.initial_backoff;
    bool done = false;
    for (std::size_t attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      if (attempt > 0) {
        ++rep.retries;
        std::this_thread::sleep_for(backoff);
        backoff = std::min(cfg.max_backoff, backoff * 2);
      }
      auto res = client->Post("/ingest", body, "application/json");
      if (!res) continue;
      if (res->status == 201 || res->status == 409) {
        if (res->status == 409) ++rep.duplicates;
        done = true;
      } else if (res->status == 400) {
        throw DeliveryError("server rejected record seq " + std::to_string(seq) + ": " + res->body, rep.delivered);
      }
    }
    if (!done) {
      throw DeliveryError("endpoint unreachable after " + std::to_string(cfg.max_retries) +
                              " retries at seq " + std::to_string(seq) + "; delivered " +
                              std::to_string(rep.delivered),
                          rep.delivered);
    }
    ++rep.delivered;
    rep.sent.push_back(std::move(r));
  }
  return rep;
}

// --- reporting ---------------------------------------------------------------------

struct StoreSummary {
  std::vector<NodeStatus> nodes;
  std::array<std::size_t, kNumClasses> per_class{};
  std::size_t unlabeled = 0;
  std::size_t total = 0;
  std::size_t skipped_lines = 0;
};

inline StoreSummary summarize(const ScanResult& scan) {
  StoreSummary s;
  std::map<std::string, NodeStatus> nodes;
  for (const auto& r : scan.records) {
    auto& n = nodes[r.node_id];
    n.node_id = r.node_id;
    n.last_seen_ms = std::max(n.last_seen_ms, r.timestamp_ms);
    n.last_seq = std::max(n.last_seq, r.seq);
    ++n.record_count;
    if (r.label) {
      ++s.per_class[static_cast<std::size_t>(class_index(*r.label))];
    } else {
      ++s.unlabeled;
    }
    ++s.total;
  }
  for (auto& [_, n] : nodes) s.nodes.push_back(n);
  s.skipped_lines = scan.skipped_lines;
  return s;
}

}  // namespace vibesense::telemetry
