#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "hivelink/dispatcher.hpp"
#include "hivelink/engine.hpp"
#include "hivelink/gate.hpp"
#include "hivelink/json_io.hpp"
#include "hivelink/store.hpp"
#include "hivelink/validate.hpp"

namespace hivelink {

/// Transport-neutral reply; mounted onto httplib by HiveService::mount.
struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "text/plain";
  std::map<std::string, std::string> headers;

  static Reply text(int status, std::string body) { return {status, std::move(body), "text/plain", {}}; }
  static Reply json_body(int status, const json& j) { return {status, j.dump(), "application/json", {}}; }
  static Reply error(int status, const std::string& msg) { return json_body(status, {{"error", msg}}); }
};

/// Request parameters from the query string, a form body or a JSON object body.
using Params = std::multimap<std::string, std::string>;

struct StoredEvent {
  std::uint64_t id = 0;   // 1-based per hive
  std::uint64_t row = 0;  // reading that produced it, 0 for operator actions
  HiveEvent event;
  bool acknowledged = false;
};

inline json to_json(const StoredEvent& s) {
  json j = to_json(s.event);
  j["id"] = s.id;
  j["row_index"] = s.row;
  j["acknowledged"] = s.acknowledged;
  return j;
}

/// Engine, gate and event history for one hive.
struct HiveMonitor {
  explicit HiveMonitor(HiveConfig c) : cfg(c), engine(c), gate(c) {}

  HiveConfig cfg;
  ReadingLog* log = nullptr;

  std::mutex ingest_mu;  // serializes stamp + rate check + append
  std::optional<Instant> last_accepted;

  std::mutex mu;  // engine, gate, events, commands
  HiveEngine engine;
  GateController gate;
  std::uint64_t processed = 0;  // last row fed to engine and gate
  std::uint64_t since_snapshot = 0;
  std::vector<StoredEvent> events;
  std::uint64_t replayed_event_row = 0;  // events up to this row are already on disk
  std::vector<GateCommand> commands;
};

struct ServiceOptions {
  int http_threads = 64;
  AlertDispatcher::Sleeper sleeper = [](Millis d) { std::this_thread::sleep_for(d); };
};

class HiveService {
public:
  using Options = ServiceOptions;

  /// Opens logs, restores snapshots and replays readings newer than them.
  static Result<std::unique_ptr<HiveService>, std::string> open(
      ServerConfig cfg, Clock& clock, std::shared_ptr<AlertTransport> transport = std::make_shared<HttpTransport>(),
      Options opt = {}) {
    std::unique_ptr<HiveService> s{new HiveService(std::move(cfg), clock, std::move(transport), std::move(opt))};
    if (auto err = s->load()) return *err;
    return s;
  }

  ~HiveService() { stop(); }

  HiveService(const HiveService&) = delete;
  HiveService& operator=(const HiveService&) = delete;

  const ServerConfig& config() const noexcept { return cfg_; }
  HiveStore& store() noexcept { return store_; }
  AlertDispatcher& dispatcher() noexcept { return *dispatcher_; }

  void start() {
    {
      std::lock_guard lk(q_mu_);
      if (worker_.joinable()) return;
      stopping_ = false;
      worker_ = std::thread([this] { run(); });
    }
    dispatcher_->start();
  }

  void stop() {
    {
      std::lock_guard lk(q_mu_);
      if (worker_.joinable()) {
        stopping_ = true;
        q_cv_.notify_all();
      }
    }
    if (worker_.joinable()) worker_.join();
    dispatcher_->stop();
    for (auto& [id, m] : monitors_) {
      std::lock_guard lk(m->mu);
      write_snapshot(*m);
    }
  }

  /// Waits until every accepted reading has gone through detection and
  /// every resulting alert has been attempted.
  void drain() {
    {
      std::unique_lock lk(q_mu_);
      idle_cv_.wait(lk, [&] { return queue_.empty() && !busy_ && !resync_; });
    }
    dispatcher_->drain();
  }

  /// Feeds any unprocessed rows through detection on the calling thread.
  void process_pending() {
    for (auto& [id, m] : monitors_) catch_up(*m);
  }

  std::uint64_t ingest_dropped() const { return ingest_dropped_.load(); }

  // ------------------------------------------------------------------ handlers

  Reply ingest(const Params& p) {
    auto get = [&](const char* k) -> std::optional<std::string> {
      auto it = p.find(k);
      if (it == p.end()) return std::nullopt;
      return std::string(strip_quotes(it->second));
    };
    RawReading raw;
    raw.temp = get("temp");
    raw.hum = get("hum");
    raw.syrup = get("syrup");
    raw.weight = get("weight");
    raw.light = get("light");
    if (!raw.temp && !raw.hum && !raw.syrup && !raw.weight && !raw.light) return Reply::text(200, "No Parameters");

    HiveMonitor* m = find(get("hive").value_or(""));
    if (!m) return Reply::error(404, "unknown hive");
    if (get("token").value_or("") != m->cfg.api_token) return Reply::error(401, "bad token");
    raw.hive_id = m->cfg.hive_id;

    std::uint64_t row = 0;
    {
      std::lock_guard lk(m->ingest_mu);
      Instant now = clock_.now();
      if (m->last_accepted && now < *m->last_accepted) now = *m->last_accepted;
      raw.timestamp = now;
      auto reading = validate_reading(raw, m->cfg);
      if (!reading) {
        const auto& e = reading.error();
        return Reply::json_body(422, {{"error", e.message()}, {"field", e.field}});
      }
      if (m->last_accepted && now - *m->last_accepted < Millis{m->cfg.min_interval_ms}) {
        auto rep = Reply::error(429, "readings must be at least " + std::to_string(m->cfg.min_interval_ms) + " ms apart");
        const auto wait = Millis{m->cfg.min_interval_ms} - (now - *m->last_accepted);
        rep.headers["Retry-After"] = std::to_string((wait.count() + 999) / 1000);
        return rep;
      }
      auto appended = m->log->append(*reading);
      if (!appended) {
        const auto& e = appended.error();
        return Reply::error(e.code == StoreError::Code::StorageFull ? 507 : 500, e.message);
      }
      row = *appended;
      m->last_accepted = now;
    }
    notify(m);
    Reply r = Reply::text(200, "OK");
    r.headers["X-Row-Index"] = std::to_string(row);
    return r;
  }

  Reply readings(const std::string& hive, const Params& p) {
    auto [m, denied] = authorize_read(hive, p);
    if (!m) return denied;
    auto range = parse_range(p);
    if (!range) return Reply::error(416, "invalid range");
    const auto fmt = param(p, "format").value_or("json");
    if (fmt == "csv") {
      auto csv = store_.export_csv(hive, range->first, range->second, m->cfg.utc_offset);
      if (!csv) return Reply::error(500, csv.error().message);
      return {200, std::move(*csv), "text/csv", {}};
    }
    if (fmt != "json") return Reply::error(422, "format must be csv or json");
    json rows = json::array();
    for (const auto& s : m->log->query(range->first, range->second)) {
      json j = to_json(s.reading);
      j["row_index"] = s.row_index;
      rows.push_back(std::move(j));
    }
    return Reply::json_body(200, rows);
  }

  Reply events(const std::string& hive, const Params& p) {
    auto [m, denied] = authorize_read(hive, p);
    if (!m) return denied;
    auto range = parse_range(p);
    if (!range) return Reply::error(416, "invalid range");
    json out = json::array();
    std::lock_guard lk(m->mu);
    for (const auto& e : m->events)
      if (e.event.detected_at >= range->first && e.event.detected_at < range->second) out.push_back(to_json(e));
    return Reply::json_body(200, out);
  }

  Reply acknowledge(const std::string& hive, const std::string& id, const Params& p) {
    HiveMonitor* m = find(hive);
    if (!m) return Reply::error(404, "unknown hive");
    if (!token_is(p, m->cfg.operator_token)) return Reply::error(401, "bad token");
    std::uint64_t n = 0;
    if (!detail::all_digits(id) || id.size() > 18 || (n = std::stoull(id)) == 0) return Reply::error(404, "unknown event");
    std::lock_guard lk(m->mu);
    if (n > m->events.size()) return Reply::error(404, "unknown event");
    auto& e = m->events[n - 1];
    if (!e.acknowledged) {
      e.acknowledged = true;
      append_line(events_path(*m), json{{"ack", n}});
    }
    return Reply::json_body(200, to_json(e));
  }

  Reply status(const std::string& hive, const Params& p) {
    auto [m, denied] = authorize_read(hive, p);
    if (!m) return denied;
    json j;
    j["hive_id"] = hive;
    j["server_time"] = format_iso8601(clock_.now());
    j["readings"] = m->log->size();
    if (auto last = m->log->latest()) {
      j["latest_reading"] = to_json(last->reading);
      j["latest_reading"]["row_index"] = last->row_index;
    } else {
      j["latest_reading"] = nullptr;
    }
    std::lock_guard lk(m->mu);
    j["gate"] = to_json(m->gate.state());
    const auto flow = m->engine.honey_flow();
    const auto refill = m->engine.refill();
    j["forecasts"] = {{"honey_flow", flow ? to_json(*flow) : json(nullptr)},
                      {"refill", refill ? to_json(*refill) : json(nullptr)}};
    j["unacknowledged_events"] =
        std::count_if(m->events.begin(), m->events.end(), [](const StoredEvent& e) { return !e.acknowledged; });
    j["processed_rows"] = m->processed;
    return Reply::json_body(200, j);
  }

  Reply gate(const std::string& hive, const Params& p) {
    HiveMonitor* m = find(hive);
    if (!m) return Reply::error(404, "unknown hive");
    if (!token_is(p, m->cfg.operator_token)) return Reply::error(401, "bad token");
    const auto action = parse_gate_action(param(p, "action").value_or(""));
    if (!action) return Reply::error(422, "action must be open, close or auto");
    int ttl = 60;
    if (auto t = param(p, "ttl_min")) {
      if (!detail::parse_int(*t, ttl)) return Reply::error(422, "ttl_min must be an integer");
    }
    std::lock_guard lk(m->mu);
    const Instant now = clock_.now();
    auto out = m->gate.apply_override(*action, ttl, now);
    if (!out) return Reply::error(422, "ttl_min must be within 1..1440");
    absorb_gate(*m, *out, 0);
    write_snapshot(*m);
    return Reply::json_body(200, to_json(m->gate.state()));
  }

  /// Device pull: returns and clears pending gate commands.
  Reply commands(const std::string& hive, const Params& p) {
    HiveMonitor* m = find(hive);
    if (!m) return Reply::error(404, "unknown hive");
    if (!token_is(p, m->cfg.api_token) && !token_is(p, m->cfg.operator_token)) return Reply::error(401, "bad token");
    std::lock_guard lk(m->mu);
    json out = json::array();
    for (const auto& c : m->commands)
      out.push_back({{"command", c.position == GatePosition::Open ? "OPEN" : "CLOSE"},
                     {"issued_at", format_iso8601(c.issued_at)}});
    m->commands.clear();
    return Reply::json_body(200, out);
  }

  Reply deliveries(const std::string& hive, const Params& p) {
    auto [m, denied] = authorize_read(hive, p);
    if (!m) return denied;
    json out = json::array();
    for (const auto& r : dispatcher_->records(hive)) out.push_back(to_json(r));
    return Reply::json_body(200, out);
  }

  Reply healthz() {
    std::size_t queued = 0;
    {
      std::lock_guard lk(q_mu_);
      queued = queue_.size();
    }
    return Reply::json_body(200, {{"status", "ok"},
                                  {"hives", monitors_.size()},
                                  {"ingest_queue", queued},
                                  {"ingest_dropped", ingest_dropped()},
                                  {"alert_queue", dispatcher_->queued()},
                                  {"alert_dropped", dispatcher_->dropped()}});
  }

  // ------------------------------------------------------------------ http

  void mount(httplib::Server& srv) {
    auto wrap = [](Reply r, httplib::Response& res) {
      res.status = r.status;
      for (const auto& [k, v] : r.headers) res.set_header(k, v);
      res.set_content(std::move(r.body), r.content_type);
    };
    auto ingest = [this, wrap](const httplib::Request& req, httplib::Response& res) { wrap(this->ingest(params_of(req)), res); };
    srv.Get("/ingest", ingest);
    srv.Post("/ingest", ingest);
    srv.Get(R"(/hives/([^/]+)/readings)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(readings(req.matches[1], params_of(req)), res);
    });
    srv.Get(R"(/hives/([^/]+)/events)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(events(req.matches[1], params_of(req)), res);
    });
    srv.Post(R"(/hives/([^/]+)/events/([^/]+)/ack)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(acknowledge(req.matches[1], req.matches[2], params_of(req)), res);
    });
    srv.Get(R"(/hives/([^/]+)/status)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(status(req.matches[1], params_of(req)), res);
    });
    srv.Post(R"(/hives/([^/]+)/gate)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(gate(req.matches[1], params_of(req)), res);
    });
    srv.Get(R"(/hives/([^/]+)/commands)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(commands(req.matches[1], params_of(req)), res);
    });
    srv.Get(R"(/hives/([^/]+)/deliveries)", [this, wrap](const httplib::Request& req, httplib::Response& res) {
      wrap(deliveries(req.matches[1], params_of(req)), res);
    });
    srv.Get("/healthz", [this, wrap](const httplib::Request&, httplib::Response& res) { wrap(healthz(), res); });
    const int threads = opt_.http_threads;
    srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  }

  /// Query string, urlencoded form and JSON object bodies all land in one map.
  /// A bearer token in the Authorization header fills "token".
  static Params params_of(const httplib::Request& req) {
    Params p(req.params.begin(), req.params.end());
    if (req.get_header_value("Content-Type").find("application/json") == 0 && !req.body.empty()) {
      json j = json::parse(req.body, nullptr, false);
      if (j.is_object())
        for (const auto& [k, v] : j.items()) p.emplace(k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    const auto auth = req.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0 && p.find("token") == p.end()) p.emplace("token", auth.substr(7));
    return p;
  }

private:
  HiveService(ServerConfig cfg, Clock& clock, std::shared_ptr<AlertTransport> transport, Options opt)
      : cfg_(std::move(cfg)),
        clock_(clock),
        opt_(std::move(opt)),
        store_(cfg_.data_dir, cfg_.fsync ? Durability::Fsync : Durability::Flush) {
    AlertDispatcher::Options dopt;
    dopt.queue_capacity = cfg_.alert_queue_capacity;
    dopt.dedup_window = std::chrono::hours{cfg_.dedup_hours};
    if (!cfg_.data_dir.empty()) dopt.records_path = (std::filesystem::path(cfg_.data_dir) / "deliveries.jsonl").string();
    dispatcher_ = std::make_unique<AlertDispatcher>(dopt, std::move(transport), clock_, opt_.sleeper);
  }

  static std::optional<std::string> param(const Params& p, const char* k) {
    auto it = p.find(k);
    if (it == p.end()) return std::nullopt;
    return it->second;
  }

  static bool token_is(const Params& p, const std::string& expected) {
    auto t = param(p, "token");
    return t && !expected.empty() && *t == expected;
  }

  HiveMonitor* find(const std::string& hive) {
    auto it = monitors_.find(hive);
    return it == monitors_.end() ? nullptr : it->second.get();
  }

  // Reads accept the read token or the operator token.
  std::pair<HiveMonitor*, Reply> authorize_read(const std::string& hive, const Params& p) {
    HiveMonitor* m = find(hive);
    if (!m) return {nullptr, Reply::error(404, "unknown hive")};
    if (!token_is(p, m->cfg.read_token) && !token_is(p, m->cfg.operator_token))
      return {nullptr, Reply::error(401, "bad token")};
    return {m, {}};
  }

  // Half-open [from, to); absent bounds are open-ended. from > to is invalid.
  static std::optional<std::pair<Instant, Instant>> parse_range(const Params& p) {
    Instant from = Instant::min(), to = Instant::max();
    if (auto f = param(p, "from")) {
      auto t = parse_instant(*f);
      if (!t) return std::nullopt;
      from = *t;
    }
    if (auto f = param(p, "to")) {
      auto t = parse_instant(*f);
      if (!t) return std::nullopt;
      to = *t;
    }
    if (to < from) return std::nullopt;
    return std::pair{from, to};
  }

  // ------------------------------------------------------------------ detection

  void notify(HiveMonitor* m) {
    std::lock_guard lk(q_mu_);
    if (queue_.size() >= cfg_.ingest_queue_capacity) {
      // the reading is on disk; the worker rescans every hive later
      ++ingest_dropped_;
      resync_ = true;
    } else {
      queue_.push_back(m);
    }
    q_cv_.notify_all();
  }

  void run() {
    std::unique_lock lk(q_mu_);
    for (;;) {
      q_cv_.wait(lk, [&] { return stopping_ || !queue_.empty() || resync_; });
      if (queue_.empty() && !resync_ && stopping_) break;
      std::vector<HiveMonitor*> todo;
      if (!queue_.empty()) {
        todo.push_back(queue_.front());
        queue_.pop_front();
      } else {
        resync_ = false;
        for (auto& [id, m] : monitors_) todo.push_back(m.get());
      }
      busy_ = true;
      lk.unlock();
      for (auto* m : todo) catch_up(*m);
      lk.lock();
      busy_ = false;
      if (queue_.empty() && !resync_) idle_cv_.notify_all();
    }
    idle_cv_.notify_all();
  }

  void catch_up(HiveMonitor& m) {
    std::lock_guard lk(m.mu);
    for (const auto& s : m.log->rows_after(m.processed)) {
      auto evs = m.engine.step(s.reading);
      if (evs)
        for (auto& e : *evs) record(m, std::move(e), s.row_index);
      absorb_gate(m, m.gate.step(s.reading.timestamp, s.reading.light), s.row_index);
      m.processed = s.row_index;
      if (++m.since_snapshot >= static_cast<std::uint64_t>(std::max(1, cfg_.snapshot_every))) write_snapshot(m);
    }
  }

  void absorb_gate(HiveMonitor& m, GateOutput out, std::uint64_t row) {
    if (out.command) m.commands.push_back(*out.command);
    for (auto& e : out.events) record(m, std::move(e), row);
  }

  void record(HiveMonitor& m, HiveEvent e, std::uint64_t row) {
    // rows replayed after a restart already had their events written and dispatched
    if (row != 0 && row <= m.replayed_event_row) return;
    StoredEvent s{m.events.size() + 1, row, std::move(e), false};
    append_line(events_path(m), to_json(s));
    dispatcher_->enqueue(s.event);
    m.events.push_back(std::move(s));
  }

  // ------------------------------------------------------------------ persistence

  std::filesystem::path hive_dir(const HiveMonitor& m) const {
    return cfg_.data_dir.empty() ? std::filesystem::path{} : std::filesystem::path(cfg_.data_dir) / m.cfg.hive_id;
  }
  std::filesystem::path events_path(const HiveMonitor& m) const {
    auto d = hive_dir(m);
    return d.empty() ? d : d / "events.jsonl";
  }
  std::filesystem::path snapshot_path(const HiveMonitor& m) const {
    auto d = hive_dir(m);
    return d.empty() ? d : d / "state.json";
  }

  void append_line(const std::filesystem::path& path, const json& j) const {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::app);
    out << j.dump() << '\n';
  }

  // Engine and gate state at row `processed`; written via rename.
  void write_snapshot(HiveMonitor& m) {
    m.since_snapshot = 0;
    const auto path = snapshot_path(m);
    if (path.empty()) return;
    json commands = json::array();
    for (const auto& c : m.commands) commands.push_back({static_cast<int>(c.position), to_epoch_ms(c.issued_at)});
    const json j = {{"row", m.processed},
                    {"engine", m.engine.snapshot()},
                    {"gate", gate_snapshot(m.gate.state())},
                    {"commands", commands}};
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
  }

  std::optional<std::string> load() {
    for (const auto& hc : cfg_.hives) {
      auto m = std::make_unique<HiveMonitor>(hc);
      auto log = store_.open_hive(hc.hive_id);
      if (!log) return "hive " + hc.hive_id + ": " + log.error().message;
      m->log = *log;
      if (auto last = m->log->latest()) m->last_accepted = last->reading.timestamp;
      if (auto err = restore(*m)) return "hive " + hc.hive_id + ": " + *err;
      dispatcher_->set_sinks(hc.hive_id, hc.alert_sinks);
      monitors_.emplace(hc.hive_id, std::move(m));
    }
    process_pending();
    return std::nullopt;
  }

  std::optional<std::string> restore(HiveMonitor& m) {
    const auto snap = snapshot_path(m);
    if (!snap.empty() && std::filesystem::exists(snap)) {
      std::ifstream in(snap);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) return std::string("unreadable snapshot");
      auto engine = HiveEngine::restore(j.at("engine"), m.cfg);
      if (!engine) return "snapshot: " + engine.error();
      auto gate = gate_restore(j.at("gate"));
      if (!gate) return std::string("snapshot: bad gate state");
      m.engine = std::move(*engine);
      m.gate = GateController(m.cfg, *gate);
      m.processed = j.at("row").get<std::uint64_t>();
      if (m.processed > m.log->size()) return std::string("snapshot is ahead of the reading log");
      for (const auto& c : j.value("commands", json::array()))
        m.commands.push_back({static_cast<GatePosition>(c.at(0).get<int>()), from_epoch_ms(c.at(1).get<std::int64_t>())});
    }
    const auto evp = events_path(m);
    if (!evp.empty() && std::filesystem::exists(evp)) {
      std::ifstream in(evp);
      std::string line;
      while (std::getline(in, line)) {
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;  // torn tail
        if (j.contains("ack")) {
          const auto n = j["ack"].get<std::uint64_t>();
          if (n >= 1 && n <= m.events.size()) m.events[n - 1].acknowledged = true;
          continue;
        }
        auto e = event_from_json(j);
        if (!e) continue;
        StoredEvent s{m.events.size() + 1, j.value("row_index", std::uint64_t{0}), std::move(*e), false};
        m.replayed_event_row = std::max(m.replayed_event_row, s.row);
        m.events.push_back(std::move(s));
      }
    }
    return std::nullopt;
  }

  ServerConfig cfg_;
  Clock& clock_;
  Options opt_;
  HiveStore store_;
  std::unique_ptr<AlertDispatcher> dispatcher_;
  std::map<std::string, std::unique_ptr<HiveMonitor>> monitors_;

  std::mutex q_mu_;
  std::condition_variable q_cv_, idle_cv_;
  std::deque<HiveMonitor*> queue_;
  bool busy_ = false;
  bool resync_ = false;
  bool stopping_ = false;
  std::thread worker_;
  std::atomic<std::uint64_t> ingest_dropped_{0};
};

/// Splits "host:port".
inline std::optional<std::pair<std::string, int>> parse_bind(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  int port = 0;
  if (!detail::parse_int(std::string_view(s).substr(colon + 1), port) || port < 0 || port > 65535) return std::nullopt;
  return std::pair{s.substr(0, colon), port};
}

}  // namespace hivelink
