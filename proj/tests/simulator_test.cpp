#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "hivelink/simulator.hpp"
#include "hivelink/store.hpp"
#include "hivelink/validate.hpp"
#include "live_server.hpp"
#include "test_util.hpp"

using namespace hivelink;
using namespace std::chrono_literals;

namespace {

const std::string kScenarios = HIVELINK_SCENARIOS;

Scenario load(const std::string& name) {
  auto s = load_scenario(kScenarios + "/" + name + ".ini");
  if (!s) throw std::runtime_error(name + ": " + s.error().message);
  return *s;
}

HiveConfig config_for(const Scenario& s) {
  HiveConfig c = test_util::hive_config(s.hive_id);
  c.utc_offset = s.utc_offset;
  c.registered_at = s.start - 24h;
  return c;
}

std::vector<HiveEvent> detections(const std::vector<HiveEvent>& all) {
  std::vector<HiveEvent> out;
  for (const auto& e : all)
    if (e.kind != EventKind::GateChanged) out.push_back(e);
  return out;
}

std::vector<EventKind> kinds(const std::vector<HiveEvent>& evs) {
  std::vector<EventKind> out;
  for (const auto& e : evs) out.push_back(e.kind);
  return out;
}

}  // namespace

TEST(Scenario, ParsesSectionsAndEpisodes) {
  auto s = parse_scenario(R"(
# comment
[scenario]
name = demo
seed = 9
start = 2023-03-01T00:00:00+05:30
duration = 2d
interval = 5m
[noise]
weight_sigma_g = 2   ; trailing comment
[episode]
at = 30h
kind = FALL
[episode]
at = 2h
kind = FEED
refill_ml = 400
consumption_ml_per_hour = 8
)");
  ASSERT_TRUE(s.ok()) << s.error().message;
  EXPECT_EQ(s->name, "demo");
  EXPECT_EQ(s->seed, 9u);
  EXPECT_EQ(s->interval, 5min);
  EXPECT_EQ(s->weight_sigma_g, 2);
  ASSERT_EQ(s->episodes.size(), 2u);
  EXPECT_EQ(s->episodes[0].kind, EpisodeKind::Feed);  // sorted by offset
  EXPECT_EQ(s->episodes[1].at, 30h);
}

TEST(Scenario, RejectsInvalidFiles) {
  auto bad = [](const std::string& text) { return !parse_scenario(text).ok(); };
  EXPECT_TRUE(bad("[scenario]\nspeed = 3\n"));
  EXPECT_TRUE(bad("[weather]\n"));
  EXPECT_TRUE(bad("name = x\n"));
  EXPECT_TRUE(bad("[scenario]\ninterval = 500ms\n"));
  EXPECT_TRUE(bad("[episode]\nat = 1h\nkind = EARTHQUAKE\n"));
  EXPECT_TRUE(bad("[episode]\nat = 1h\nkind = HONEY_FLOW\ng_per_day = 250\ndays = 2\n"
                  "[episode]\nat = 20h\nkind = ABSCOND\n"));
  EXPECT_TRUE(bad("[episode]\nat = 1h\nkind = THEFT\n[episode]\nat = 2h\nkind = FALL\n"));
  EXPECT_TRUE(bad("[episode]\nat = 1h\nkind = SENSOR_FAULT\nfield = temp\nmode = dark\nduration = 1h\n"));
  EXPECT_TRUE(bad("[episode]\nat = 30h\nkind = FALL\n"));  // after the 24 h default duration
  auto err = parse_scenario("[scenario]\n\nseed = many\n");
  ASSERT_FALSE(err.ok());
  EXPECT_EQ(err.error().line, 3u);
}

TEST(Generate, SameSeedSameTrace) {
  auto s = load("abscond");
  auto a = generate(s), b = generate(s);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->readings, b->readings);
  s.seed += 1;
  EXPECT_NE(generate(s)->readings, a->readings);
}

TEST(Generate, EveryReadingValidates) {
  for (const char* name : {"normal", "abscond", "theft", "fall", "honey_flow", "swarm", "feed", "light_fault"}) {
    const auto s = load(name);
    const auto trace = *generate(s);
    const auto cfg = config_for(s);
    for (const auto& r : trace.readings) {
      RawReading raw{r.hive_id, r.timestamp, format_number(r.temp_c), format_number(r.humidity_pct),
                     format_number(r.syrup_ml), format_number(r.weight_g), r.light ? "1" : "0"};
      auto v = validate_reading(raw, cfg);
      ASSERT_TRUE(v.ok()) << name << " " << v.error().message();
      ASSERT_EQ(*v, r);
    }
  }
}

TEST(Generate, AnnotationsCoverTheTrace) {
  for (const char* name : {"normal", "abscond", "feed", "swarm"}) {
    const auto s = load(name);
    const auto trace = *generate(s);
    ASSERT_FALSE(trace.annotations.empty());
    EXPECT_EQ(trace.annotations.front().start, s.start);
    EXPECT_EQ(trace.annotations.back().end, s.start + s.duration);
    for (std::size_t i = 1; i < trace.annotations.size(); ++i)
      EXPECT_EQ(trace.annotations[i - 1].end, trace.annotations[i].start);
  }
}

TEST(Generate, NightNoiseMatchesSigma) {
  auto s = load("normal");
  s.duration = 30 * 24h;
  const auto trace = *generate(s);
  // midnight to 06:00: no forager dip
  std::vector<double> w;
  for (const auto& r : trace.readings)
    if (local_time_of_day(r.timestamp, s.utc_offset) < TimeOfDay{6 * 60}) w.push_back(r.weight_g);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  double ss = 0;
  for (double v : w) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(w.size() - 1));
  EXPECT_NEAR(mean, 8000, 0.5);
  EXPECT_NEAR(sd, 5, 0.2);
}

TEST(Generate, DiurnalShapeAndLight) {
  const auto s = load("normal");
  const auto trace = *generate(s);
  for (const auto& r : trace.readings) {
    const auto tod = local_time_of_day(r.timestamp, s.utc_offset);
    EXPECT_EQ(r.light, tod >= TimeOfDay{6 * 60} && tod < TimeOfDay{19 * 60});
    EXPECT_GE(r.temp_c, 30);
    EXPECT_LE(r.temp_c, 32);
    if (tod == TimeOfDay{13 * 60}) {
      EXPECT_NEAR(r.weight_g, 8000 - 300, 25);  // mid-dip
    }
  }
}

TEST(Generate, AbscondCoolsTowardAmbient) {
  auto s = load("abscond");
  s.temp_sigma = 0;
  s.weight_sigma_g = 0;
  const auto trace = *generate(s);
  auto at = [&](Millis off) {
    return *std::find_if(trace.readings.begin(), trace.readings.end(),
                         [&](const SensorReading& r) { return r.timestamp == s.start + off; });
  };
  auto ambient = [&](double h) { return 25 + 5 * std::cos(2 * std::numbers::pi * (h - 15) / 24); };
  EXPECT_NEAR(at(10h + 30min).weight_g, at(10h).weight_g - 1500 + 300 * std::sin(std::numbers::pi * 0.2), 1);
  // one time constant after the colony leaves
  const double expect = ambient(12) + (31 - ambient(12)) * std::exp(-1.0);
  EXPECT_NEAR(at(12h).temp_c, expect, 0.06);
}

TEST(Generate, TheftFallAndFeedShapes) {
  auto theft = *generate(load("theft"));
  EXPECT_NEAR(theft.readings.back().weight_g, 0, 25);
  auto fall = *generate(load("fall"));
  EXPECT_NEAR(fall.readings.back().weight_g, -2000, 25);
  const auto feed_s = load("feed");
  const auto feed = *generate(feed_s);
  for (const auto& r : feed.readings) {
    const double h = std::chrono::duration<double, std::ratio<3600>>(r.timestamp - feed_s.start).count();
    const double truth = h < 1 ? 500 : std::max(0.0, 500 - 500.0 / 48 * (h - 1));
    ASSERT_NEAR(r.syrup_ml, truth, 0.5);
  }
}

TEST(Generate, SensorFaults) {
  auto s = load("normal");
  s.episodes = {};
  Episode stuck;
  stuck.at = 2h;
  stuck.kind = EpisodeKind::SensorFault;
  stuck.field = "weight";
  stuck.mode = "stuck";
  stuck.duration = 1h;
  Episode gap = stuck;
  gap.at = 5h;
  gap.field = "temp";
  gap.mode = "dropout";
  s.episodes = {stuck, gap};
  const auto trace = *generate(s);
  EXPECT_EQ(trace.readings.size(), 24u * 60 - 60);
  std::set<double> stuck_values;
  for (const auto& r : trace.readings)
    if (r.timestamp >= s.start + 2h && r.timestamp < s.start + 3h) stuck_values.insert(r.weight_g);
  EXPECT_EQ(stuck_values.size(), 1u);
}

TEST(Alignment, NormalDayIsQuiet) {
  const auto s = load("normal");
  ASSERT_EQ(s.seed, 42u);
  const auto trace = *generate(s);
  EXPECT_TRUE(detections(detect_offline(trace.readings, config_for(s))).empty());
}

TEST(Alignment, EveryScenarioMatchesItsAnnotations) {
  const std::map<std::string, std::vector<EventKind>> expect{
      {"normal", {}},
      {"abscond", {EventKind::Absconding}},
      {"theft", {EventKind::Theft}},
      {"fall", {EventKind::Fall}},
      {"feed", {EventKind::RefillDue}},
      {"light_fault", {EventKind::LightAnomaly}},
  };
  for (const auto& [name, kinds_expected] : expect) {
    const auto s = load(name);
    const auto trace = *generate(s);
    const auto evs = detect_offline(trace.readings, config_for(s));
    EXPECT_EQ(check_alignment(trace.annotations, evs), std::nullopt) << name;
    EXPECT_EQ(kinds(detections(evs)), kinds_expected) << name;
  }
}

TEST(Alignment, HoneyFlowIsIdealWithFourteenDaysToFill) {
  const auto s = load("honey_flow");
  const auto trace = *generate(s);
  const auto evs = detect_offline(trace.readings, config_for(s));
  EXPECT_EQ(check_alignment(trace.annotations, evs), std::nullopt);
  std::vector<HiveEvent> flow;
  for (const auto& e : evs)
    if (e.kind == EventKind::HoneyFlow) flow.push_back(e);
  ASSERT_EQ(flow.size(), 1u);
  EXPECT_EQ(flow[0].evidence.at("classification"), static_cast<double>(FlowClass::IdealFlow));
  EXPECT_NEAR(flow[0].evidence.at("slope_g_per_day"), 250, 10);

  // Five daily baselines into the flow the fit covers a full window.
  HiveEngine engine(config_for(s));
  for (const auto& r : trace.readings) {
    if (r.timestamp > s.start + 24h * 4 + 2h) break;
    (void)engine.step(r);
  }
  const auto est = engine.honey_flow();
  ASSERT_TRUE(est);
  EXPECT_EQ(est->classification, FlowClass::IdealFlow);
  ASSERT_TRUE(est->eta_days_to_full);
  EXPECT_GE(*est->eta_days_to_full, 13);
  EXPECT_LE(*est->eta_days_to_full, 15);
}

TEST(Alignment, SwarmBuildupRaisesOneSwarmRisk) {
  const auto s = load("swarm");
  const auto trace = *generate(s);
  const auto evs = detect_offline(trace.readings, config_for(s));
  EXPECT_EQ(check_alignment(trace.annotations, evs), std::nullopt);
  const auto n = std::count_if(evs.begin(), evs.end(), [](auto& e) { return e.kind == EventKind::SwarmRisk; });
  EXPECT_EQ(n, 1);
}

TEST(Alignment, FeedEtaWithinTwoHoursOfTruth) {
  const auto s = load("feed");
  const auto trace = *generate(s);
  const auto evs = detections(detect_offline(trace.readings, config_for(s)));
  ASSERT_EQ(evs.size(), 1u);
  const double since_feed = std::chrono::duration<double, std::ratio<3600>>(evs[0].detected_at - (s.start + 1h)).count();
  EXPECT_NEAR(evs[0].evidence.at("eta_hours"), 48 - since_feed, 2);
}

TEST(Alignment, MismatchesAreReported) {
  const Instant t0 = *parse_instant("2023-03-01T00:00:00Z");
  std::vector<Annotation> ann{{t0, t0 + 1h, EpisodeKind::Normal, {}, {}},
                              {t0 + 1h, t0 + 2h, EpisodeKind::Theft, {EventKind::Theft}, {}}};
  HiveEvent theft{"H1", EventKind::Theft, t0, t0 + 70min, t0 + 70min, {}};
  HiveEvent gate{"H1", EventKind::GateChanged, t0, t0, t0, {}};
  EXPECT_EQ(check_alignment(ann, {gate, theft}), std::nullopt);
  EXPECT_TRUE(check_alignment(ann, {}));                 // missing
  EXPECT_TRUE(check_alignment(ann, {theft, theft}));     // twice
  HiveEvent early = theft;
  early.detected_at = t0 + 30min;
  EXPECT_TRUE(check_alignment(ann, {early}));            // wrong segment
  HiveEvent late = theft;
  late.detected_at = t0 + 3h;
  EXPECT_TRUE(check_alignment(ann, {theft, late}));      // outside the trace
}

TEST(Replay, HundredReadingsAtThousandX) {
  auto s = load("normal");
  s.interval = 10s;
  s.duration = 1000s;
  s.token = "dev-H1";
  const auto trace = *generate(s);
  ASSERT_EQ(trace.readings.size(), 100u);
  ManualClock clock(s.start);
  test_util::LiveServer srv(test_util::server_config({"H1"}), clock);
  ReplayOptions opt;
  opt.speed = 1000;
  opt.token = s.token;
  opt.before_send = [&](const SensorReading& r) { clock.set(r.timestamp); };
  auto st = replay_http(trace.readings, srv.url(), opt);
  EXPECT_EQ(st.sent, 100u);
  EXPECT_EQ(st.accepted, 100u);
  EXPECT_EQ(st.rejected, 0u);
  EXPECT_GE(st.duration_s, 0.99 * 0.9);  // 99 gaps of 10 ms
  srv.service->drain();
  auto rows = srv.service->store().find("H1")->rows_after(0);
  ASSERT_EQ(rows.size(), 100u);
  for (std::size_t i = 0; i < rows.size(); ++i) ASSERT_EQ(rows[i].reading, trace.readings[i]);
}

TEST(Replay, PollsGateCommands) {
  auto s = load("normal");
  s.start = *parse_instant("2023-03-01T18:30:00+05:30");
  s.duration = 1h;
  const auto trace = *generate(s);
  ManualClock clock(s.start);
  test_util::LiveServer srv(test_util::server_config({"H1"}), clock);
  ReplayOptions opt;
  opt.speed = 0;
  opt.token = "dev-H1";
  opt.before_send = [&](const SensorReading& r) {
    srv.service->drain();  // let the gate see the previous reading before the poll
    clock.set(r.timestamp);
  };
  auto st = replay_http(trace.readings, srv.url(), opt);
  EXPECT_EQ(st.accepted, 60u);
  ASSERT_EQ(st.commands.size(), 1u);
  EXPECT_EQ(st.commands[0], "2023-03-01T13:30:00.000Z CLOSE");
}

// A loopback port that was free a moment ago and has no listener.
int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
  socklen_t len = sizeof a;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
  ::close(fd);
  return ntohs(a.sin_port);
}

TEST(Replay, ServerDownRejectsWithoutThrowing) {
  auto s = load("normal");
  s.interval = 10s;
  s.duration = 1000s;
  const auto trace = *generate(s);
  const int port = closed_port();
  ReplayOptions opt;
  opt.speed = 0;
  opt.retry_delay = 0ms;
  opt.token = "dev-H1";
  int sleeps = 0;
  opt.sleep = [&](Millis) { ++sleeps; };
  auto st = replay_http(trace.readings, "http://127.0.0.1:" + std::to_string(port), opt);
  EXPECT_EQ(st.sent, 100u);
  EXPECT_EQ(st.rejected, 100u);
  EXPECT_EQ(st.accepted, 0u);
  EXPECT_EQ(sleeps, 300);  // three retries per reading
}

TEST(Replay, CsvFileRoundTripsThroughStore) {
  const auto s = load("theft");
  const auto trace = *generate(s);
  test_util::TempDir dir;
  const auto path = (dir.path() / "theft.csv").string();
  auto st = replay_csv(trace.readings, path, s.utc_offset);
  EXPECT_EQ(st.accepted, trace.readings.size());
  const auto text = test_util::read_file(path);
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  CsvImportOptions opt;
  opt.offset = s.utc_offset;
  ASSERT_EQ(*store.import_csv("H1", text, opt), trace.readings.size());
  EXPECT_EQ(*store.export_csv("H1", Instant::min(), Instant::max(), s.utc_offset), text);
  auto back = store.find("H1")->rows_after(0);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].reading.weight_g, trace.readings[i].weight_g);
    EXPECT_EQ(back[i].reading.timestamp, trace.readings[i].timestamp);
  }
}
