// hivelink: run the ingest server or replay simulated hives against one.
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "hivelink/service.hpp"
#include "hivelink/simulator.hpp"

using namespace hivelink;

namespace {

int serve(const std::string& config_path, const std::string& bind_override) {
  auto cfg = load_server_config(config_path);
  if (!cfg) {
    std::cerr << "hivelink: " << cfg.error() << "\n";
    return 2;
  }
  if (!bind_override.empty()) cfg->bind = bind_override;
  const auto bind = parse_bind(cfg->bind);
  if (!bind) {
    std::cerr << "hivelink: bad bind address " << cfg->bind << "\n";
    return 2;
  }

  // Signals go to the waiter thread only.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  SystemClock clock;
  auto svc = HiveService::open(*cfg, clock);
  if (!svc) {
    std::cerr << "hivelink: " << svc.error() << "\n";
    return 1;
  }
  auto& service = **svc;
  httplib::Server server;
  service.mount(server);
  if (!server.bind_to_port(bind->first, bind->second)) {
    std::cerr << "hivelink: cannot bind " << cfg->bind << "\n";
    return 1;
  }
  service.start();

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
  });
  std::cerr << "hivelink: serving " << cfg->hives.size() << " hive(s) on " << cfg->bind << "\n";
  server.listen_after_bind();
  if (waiter.joinable()) {
    // listen returned without a signal (socket error): wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  service.stop();
  std::cerr << "hivelink: stopped\n";
  return 0;
}

bool is_url(const std::string& t) { return t.rfind("http://", 0) == 0 || t.rfind("https://", 0) == 0; }

int simulate(const std::vector<std::string>& paths, const std::string& target, double speed,
             std::optional<std::uint64_t> seed, const std::string& token) {
  if (!is_url(target) && paths.size() > 1) {
    std::cerr << "hivelink: a file target takes a single scenario\n";
    return 2;
  }
  std::vector<Scenario> scenarios;
  for (const auto& p : paths) {
    auto s = load_scenario(p);
    if (!s) {
      std::cerr << p << ":" << s.error().line << ": " << s.error().message << "\n";
      return 2;
    }
    if (seed) s->seed = *seed;
    scenarios.push_back(std::move(*s));
  }

  std::vector<ReplayStats> stats(scenarios.size());
  std::vector<std::string> errors(scenarios.size());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    workers.emplace_back([&, i] {
      const auto& s = scenarios[i];
      auto trace = generate(s);
      if (!trace) {
        errors[i] = trace.error().message;
        return;
      }
      if (!is_url(target)) {
        stats[i] = replay_csv(trace->readings, target, s.utc_offset);
        return;
      }
      ReplayOptions opt;
      opt.speed = speed;
      opt.token = !token.empty() ? token : s.token;
      stats[i] = replay_http(trace->readings, target, opt);
    });
  }
  for (auto& w : workers) w.join();

  int rc = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    if (!errors[i].empty()) {
      std::cerr << s.name << ": " << errors[i] << "\n";
      rc = 1;
      continue;
    }
    const auto& st = stats[i];
    std::cout << s.name << " hive=" << s.hive_id << " seed=" << s.seed << " sent=" << st.sent
              << " accepted=" << st.accepted << " rejected=" << st.rejected << " seconds=" << st.duration_s << "\n";
    for (const auto& c : st.commands) std::cout << "  command " << c << "\n";
    if (st.rejected > 0) rc = 1;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HiveLink beehive telemetry"};
  app.require_subcommand(1);

  auto* srv = app.add_subcommand("serve", "Run the ingest and query server");
  std::string config_path, bind;
  srv->add_option("--config", config_path, "Server config (JSON)")->envname("HIVELINK_CONFIG")->required();
  srv->add_option("--bind", bind, "host:port, overrides the config")->envname("HIVELINK_BIND");

  auto* sim = app.add_subcommand("simulate", "Generate scenario traces and replay them");
  std::vector<std::string> scenarios;
  std::string target, token;
  double speed = 1;
  std::uint64_t seed = 0;
  sim->add_option("--scenario", scenarios, "Scenario file (repeat for several hives)")->required()->check(CLI::ExistingFile);
  sim->add_option("--target", target, "Server base URL or CSV output file")->required();
  sim->add_option("--speed", speed, "Replay speed multiplier, 0 for as fast as possible")->check(CLI::NonNegativeNumber);
  auto* seed_opt = sim->add_option("--seed", seed, "Override the scenario seed");
  sim->add_option("--token", token, "Device token, overrides the scenario");

  CLI11_PARSE(app, argc, argv);

  if (srv->parsed()) return serve(config_path, bind);
  std::optional<std::uint64_t> seed_override;
  if (seed_opt->count() > 0) seed_override = seed;
  return simulate(scenarios, target, speed, seed_override, token);
}
