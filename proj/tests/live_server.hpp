#pragma once

#include <functional>
#include <mutex>
#include <thread>

#include "hivelink/service.hpp"

namespace test_util {

using namespace hivelink;

inline HiveConfig hive_config(const std::string& id) {
  HiveConfig c;
  c.hive_id = id;
  c.api_token = "dev-" + id;
  c.operator_token = "op-" + id;
  c.read_token = "read-" + id;
  return c;
}

inline ServerConfig server_config(const std::vector<std::string>& hives, std::string data_dir = {}) {
  ServerConfig sc;
  sc.data_dir = std::move(data_dir);
  for (const auto& h : hives) sc.hives.push_back(hive_config(h));
  return sc;
}

/// Answers 200 to everything and remembers what was posted.
class RecordingTransport final : public AlertTransport {
public:
  int post(const std::string& url, const std::string& body) override {
    std::lock_guard lk(mu);
    posts.emplace_back(url, body);
    return 200;
  }
  std::mutex mu;
  std::vector<std::pair<std::string, std::string>> posts;
};

/// Moves one second forward on every read, so back-to-back requests clear
/// the per-hive spacing limit.
class TickingClock final : public Clock {
public:
  explicit TickingClock(Instant start, Millis tick = std::chrono::seconds{1}) : ms_(to_epoch_ms(start)), tick_(tick.count()) {}
  Instant now() override { return from_epoch_ms(ms_.fetch_add(tick_)); }

private:
  std::atomic<std::int64_t> ms_;
  std::int64_t tick_;
};

/// HiveService behind a real HTTP listener on an ephemeral loopback port.
class LiveServer {
public:
  LiveServer(ServerConfig cfg, Clock& clock, std::shared_ptr<AlertTransport> transport = std::make_shared<RecordingTransport>(),
             HiveService::Options opt = {}) {
    opt.sleeper = [](Millis) {};
    auto svc = HiveService::open(std::move(cfg), clock, std::move(transport), opt);
    if (!svc) throw std::runtime_error(svc.error());
    service = std::move(*svc);
    service->mount(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    service->start();
  }

  ~LiveServer() {
    server.stop();
    if (thread.joinable()) thread.join();
    service->stop();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_keep_alive(true);
    return c;
  }

  std::unique_ptr<HiveService> service;
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

inline std::string ingest_query(const std::string& hive, const SensorReading& r, const std::string& token) {
  return "/ingest?hive=" + hive + "&temp=" + format_number(r.temp_c) + "&hum=" + format_number(r.humidity_pct) +
         "&syrup=" + format_number(r.syrup_ml) + "&weight=" + format_number(r.weight_g) +
         "&light=" + (r.light ? "1" : "0") + "&token=" + token;
}

}  // namespace test_util
