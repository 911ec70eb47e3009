#pragma once

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "hivelink/csv.hpp"
#include "hivelink/json_io.hpp"
#include "hivelink/model.hpp"
#include "hivelink/time.hpp"

namespace hivelink {

enum class DeliveryState { Pending, Delivered, Failed, Suppressed, RateLimited };

constexpr std::string_view to_string(DeliveryState s) noexcept {
  switch (s) {
    case DeliveryState::Pending: return "PENDING";
    case DeliveryState::Delivered: return "DELIVERED";
    case DeliveryState::Failed: return "FAILED";
    case DeliveryState::Suppressed: return "SUPPRESSED";
    case DeliveryState::RateLimited: return "RATE_LIMITED";
  }
  return "?";
}

inline std::optional<DeliveryState> parse_delivery_state(std::string_view s) {
  for (auto st : {DeliveryState::Pending, DeliveryState::Delivered, DeliveryState::Failed,
                  DeliveryState::Suppressed, DeliveryState::RateLimited})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

/// One event's delivery to one sink. Suppressed events get a single record
/// with no sink and zero attempts.
struct DeliveryRecord {
  std::uint64_t id = 0;
  std::string hive_id;
  EventKind kind = EventKind::HealthAnomaly;
  Instant event_time{};
  std::string sink;  // "ifttt:<event>", "webhook:<url>", "log:<path>"
  int attempts = 0;
  int last_status = 0;  // HTTP status, 0 for none or transport failure
  std::optional<Instant> delivered_at;
  DeliveryState state = DeliveryState::Pending;
};

inline json to_json(const DeliveryRecord& r) {
  return {{"id", r.id},
          {"hive_id", r.hive_id},
          {"kind", to_string(r.kind)},
          {"event_time", format_iso8601(r.event_time)},
          {"sink", r.sink},
          {"attempts", r.attempts},
          {"last_status", r.last_status},
          {"delivered_at", r.delivered_at ? json(format_iso8601(*r.delivered_at)) : json(nullptr)},
          {"state", to_string(r.state)}};
}

inline std::optional<DeliveryRecord> delivery_from_json(const json& j) {
  try {
    DeliveryRecord r;
    r.id = j.at("id").get<std::uint64_t>();
    r.hive_id = j.at("hive_id").get<std::string>();
    auto k = parse_event_kind(j.at("kind").get<std::string>());
    auto t = parse_instant(j.at("event_time").get<std::string>());
    auto st = parse_delivery_state(j.at("state").get<std::string>());
    if (!k || !t || !st) return std::nullopt;
    r.kind = *k;
    r.event_time = *t;
    r.state = *st;
    r.sink = j.at("sink").get<std::string>();
    r.attempts = j.at("attempts").get<int>();
    r.last_status = j.at("last_status").get<int>();
    if (!j.at("delivered_at").is_null()) r.delivered_at = parse_instant(j["delivered_at"].get<std::string>());
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Outbound POST. Returns the HTTP status, or 0 when the request failed or
/// timed out before a status arrived.
class AlertTransport {
public:
  virtual ~AlertTransport() = default;
  virtual int post(const std::string& url, const std::string& json_body) = 0;
};

class HttpTransport final : public AlertTransport {
public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds{5}) : timeout_(timeout) {}

  int post(const std::string& url, const std::string& body) override {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) return 0;
    const auto slash = url.find('/', scheme + 3);
    const std::string origin = url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : url.substr(slash);
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    auto res = cli.Post(path, body, "application/json");
    return res ? res->status : 0;
  }

private:
  std::chrono::seconds timeout_;
};

/// Compact "key=value" evidence text for the third IFTTT value.
inline std::string evidence_text(const HiveEvent& e) {
  std::string out;
  for (const auto& [k, v] : e.evidence) {
    if (!out.empty()) out += ' ';
    out += k + '=' + format_number(v);
  }
  return out;
}

/// Delivers events to each hive's sinks with dedup, rate limiting and retry.
/// enqueue() never blocks; a worker thread drains the queue.
class AlertDispatcher {
public:
  struct Options {
    std::size_t queue_capacity = 1024;
    Millis dedup_window = std::chrono::hours{12};
    int max_attempts = 5;
    Millis backoff_base = std::chrono::seconds{1};
    std::string records_path;  // JSON lines; empty keeps records in memory only
    std::size_t max_records = 10000;
  };
  using Sleeper = std::function<void(Millis)>;

  AlertDispatcher(Options opt, std::shared_ptr<AlertTransport> transport, Clock& clock,
                  Sleeper sleeper = [](Millis d) { std::this_thread::sleep_for(d); })
      : opt_(std::move(opt)), transport_(std::move(transport)), clock_(clock), sleep_(std::move(sleeper)) {
    load_records();
  }

  ~AlertDispatcher() { stop(); }

  AlertDispatcher(const AlertDispatcher&) = delete;
  AlertDispatcher& operator=(const AlertDispatcher&) = delete;

  void set_sinks(const std::string& hive, std::vector<AlertSink> sinks) {
    std::lock_guard lk(state_mu_);
    sinks_[hive] = std::move(sinks);
  }

  /// Queues an event. When full, the oldest INFO event is dropped first, then
  /// the oldest WARNING; CRITICAL events are never dropped and may push the
  /// queue past its capacity. Returns false when the incoming event itself
  /// was the one dropped.
  bool enqueue(HiveEvent e) {
    std::lock_guard lk(q_mu_);
    if (queue_.size() >= opt_.queue_capacity) {
      const Severity incoming = e.severity();
      auto oldest = [&](Severity s) {
        return std::find_if(queue_.begin(), queue_.end(), [&](const HiveEvent& q) { return q.severity() == s; });
      };
      auto victim = oldest(Severity::Info);
      if (victim == queue_.end() && incoming != Severity::Info) victim = oldest(Severity::Warning);
      if (victim != queue_.end()) {
        queue_.erase(victim);
        ++dropped_;
      } else if (incoming != Severity::Critical) {
        ++dropped_;
        return false;
      }
    }
    queue_.push_back(std::move(e));
    q_cv_.notify_all();
    return true;
  }

  std::uint64_t dropped() const {
    std::lock_guard lk(q_mu_);
    return dropped_;
  }

  std::size_t queued() const {
    std::lock_guard lk(q_mu_);
    return queue_.size();
  }

  std::vector<HiveEvent> queued_events() const {
    std::lock_guard lk(q_mu_);
    return {queue_.begin(), queue_.end()};
  }

  void start() {
    std::lock_guard lk(q_mu_);
    if (worker_.joinable()) return;
    stopping_ = false;
    worker_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lk(q_mu_);
      if (!worker_.joinable()) return;
      stopping_ = true;
    }
    q_cv_.notify_all();
    worker_.join();
  }

  /// Blocks until the queue is empty and no delivery is in flight.
  void drain() {
    std::unique_lock lk(q_mu_);
    idle_cv_.wait(lk, [&] { return queue_.empty() && !busy_; });
  }

  /// Synchronous delivery of one event to every enabled sink of its hive.
  std::vector<DeliveryRecord> dispatch(const HiveEvent& e) {
    std::vector<DeliveryRecord> out;
    std::vector<AlertSink> sinks;
    {
      std::lock_guard lk(state_mu_);
      if (e.kind != EventKind::GateChanged) {
        auto it = last_delivered_.find({e.hive_id, e.kind});
        if (it != last_delivered_.end() && abs_diff(e.detected_at, it->second) < opt_.dedup_window) {
          auto r = new_record(e, "");
          r.state = DeliveryState::Suppressed;
          persist(r);
          return {r};
        }
      }
      if (auto it = sinks_.find(e.hive_id); it != sinks_.end()) sinks = it->second;
    }

    bool any_delivered = false;
    bool any_enabled = false;
    for (std::size_t i = 0; i < sinks.size(); ++i) {
      const auto& s = sinks[i];
      if (!s.enabled) continue;
      any_enabled = true;
      DeliveryRecord r;
      {
        std::lock_guard lk(state_mu_);
        r = new_record(e, describe(s));
        auto& window = sent_[{e.hive_id, i}];
        const Instant now = clock_.now();
        while (!window.empty() && now - window.front() >= std::chrono::hours{1}) window.pop_front();
        if (window.size() >= static_cast<std::size_t>(s.rate_limit_per_hour)) {
          r.state = DeliveryState::RateLimited;
          persist(r);
          out.push_back(r);
          continue;
        }
        window.push_back(now);
        persist(r);  // before the first attempt
      }
      deliver(e, s, r);
      {
        std::lock_guard lk(state_mu_);
        persist(r);
      }
      any_delivered |= r.state == DeliveryState::Delivered;
      out.push_back(r);
    }
    if (any_delivered || !any_enabled) {
      std::lock_guard lk(state_mu_);
      auto& last = last_delivered_[{e.hive_id, e.kind}];
      last = std::max(last, e.detected_at);
    }
    return out;
  }

  std::vector<DeliveryRecord> records(const std::string& hive) const {
    std::lock_guard lk(state_mu_);
    std::vector<DeliveryRecord> out;
    for (const auto& r : records_)
      if (r.hive_id == hive) out.push_back(r);
    return out;
  }

private:
  static Millis abs_diff(Instant a, Instant b) { return a > b ? a - b : b - a; }

  static std::string describe(const AlertSink& s) {
    switch (s.kind) {
      case SinkKind::Ifttt: return "ifttt:" + s.event_name;
      case SinkKind::Webhook: return "webhook:" + s.base_url;
      case SinkKind::Log: return "log:" + (s.path.empty() ? std::string("stderr") : s.path);
    }
    return "?";
  }

  DeliveryRecord new_record(const HiveEvent& e, std::string sink) {
    DeliveryRecord r;
    r.id = ++next_id_;
    r.hive_id = e.hive_id;
    r.kind = e.kind;
    r.event_time = e.detected_at;
    r.sink = std::move(sink);
    return r;
  }

  int send_once(const HiveEvent& e, const AlertSink& s) {
    switch (s.kind) {
      case SinkKind::Ifttt: {
        json body = {{"value1", e.hive_id}, {"value2", to_string(e.kind)}, {"value3", evidence_text(e)}};
        std::string base = s.base_url;
        while (!base.empty() && base.back() == '/') base.pop_back();
        return transport_->post(base + "/trigger/" + s.event_name + "/with/key/" + s.key, body.dump());
      }
      case SinkKind::Webhook:
        return transport_->post(s.base_url, to_json(e).dump());
      case SinkKind::Log: {
        const std::string line = to_json(e).dump() + "\n";
        if (s.path.empty()) {
          std::fputs(line.c_str(), stderr);
          return 200;
        }
        std::ofstream f(s.path, std::ios::app);
        f << line;
        f.flush();
        return f ? 200 : 500;
      }
    }
    return 0;
  }

  // Retries 5xx and transport failures with exponential backoff; any other
  // non-2xx status is final.
  void deliver(const HiveEvent& e, const AlertSink& s, DeliveryRecord& r) {
    Millis delay = opt_.backoff_base;
    for (;;) {
      ++r.attempts;
      r.last_status = send_once(e, s);
      if (r.last_status >= 200 && r.last_status < 300) {
        r.state = DeliveryState::Delivered;
        r.delivered_at = clock_.now();
        return;
      }
      const bool retryable = r.last_status == 0 || r.last_status >= 500;
      if (!retryable || r.attempts >= opt_.max_attempts) {
        r.state = DeliveryState::Failed;
        return;
      }
      sleep_(delay);
      delay *= 2;
    }
  }

  void persist(const DeliveryRecord& r) {
    auto it = std::find_if(records_.rbegin(), records_.rend(), [&](const DeliveryRecord& x) { return x.id == r.id; });
    if (it != records_.rend()) *it = r;
    else records_.push_back(r);
    while (records_.size() > opt_.max_records) records_.pop_front();
    if (!opt_.records_path.empty()) {
      std::ofstream f(opt_.records_path, std::ios::app);
      f << to_json(r).dump() << '\n';
    }
  }

  void load_records() {
    if (opt_.records_path.empty()) return;
    std::ifstream f(opt_.records_path);
    std::string line;
    std::map<std::uint64_t, DeliveryRecord> by_id;
    while (std::getline(f, line)) {
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;  // torn last line after a crash
      if (auto r = delivery_from_json(j)) by_id[r->id] = *r;
    }
    for (auto& [id, r] : by_id) {
      next_id_ = std::max(next_id_, id);
      if (r.state == DeliveryState::Delivered && r.kind != EventKind::GateChanged) {
        auto& last = last_delivered_[{r.hive_id, r.kind}];
        last = std::max(last, r.event_time);
      }
      records_.push_back(std::move(r));
    }
    while (records_.size() > opt_.max_records) records_.pop_front();
  }

  void run() {
    std::unique_lock lk(q_mu_);
    for (;;) {
      q_cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (stopping_) return;
        continue;
      }
      HiveEvent e = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
      lk.unlock();
      dispatch(e);
      lk.lock();
      busy_ = false;
      if (queue_.empty()) idle_cv_.notify_all();
    }
  }

  Options opt_;
  std::shared_ptr<AlertTransport> transport_;
  Clock& clock_;
  Sleeper sleep_;

  mutable std::mutex q_mu_;
  std::condition_variable q_cv_;
  std::condition_variable idle_cv_;
  std::deque<HiveEvent> queue_;
  std::uint64_t dropped_ = 0;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;

  mutable std::mutex state_mu_;
  std::map<std::string, std::vector<AlertSink>> sinks_;
  std::map<std::pair<std::string, EventKind>, Instant> last_delivered_;
  std::map<std::pair<std::string, std::size_t>, std::deque<Instant>> sent_;
  std::deque<DeliveryRecord> records_;
  std::uint64_t next_id_ = 0;
};

}  // namespace hivelink
