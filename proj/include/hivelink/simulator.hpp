#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "hivelink/csv.hpp"
#include "hivelink/engine.hpp"
#include "hivelink/gate.hpp"
#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/time.hpp"

namespace hivelink {

enum class EpisodeKind { Normal, Abscond, SwarmBuildup, Theft, Fall, HoneyFlow, Feed, SensorFault };

constexpr std::string_view to_string(EpisodeKind k) noexcept {
  switch (k) {
    case EpisodeKind::Normal: return "NORMAL";
    case EpisodeKind::Abscond: return "ABSCOND";
    case EpisodeKind::SwarmBuildup: return "SWARM_BUILDUP";
    case EpisodeKind::Theft: return "THEFT";
    case EpisodeKind::Fall: return "FALL";
    case EpisodeKind::HoneyFlow: return "HONEY_FLOW";
    case EpisodeKind::Feed: return "FEED";
    case EpisodeKind::SensorFault: return "SENSOR_FAULT";
  }
  return "?";
}

inline std::optional<EpisodeKind> parse_episode_kind(std::string_view s) {
  for (auto k : {EpisodeKind::Normal, EpisodeKind::Abscond, EpisodeKind::SwarmBuildup, EpisodeKind::Theft,
                 EpisodeKind::Fall, EpisodeKind::HoneyFlow, EpisodeKind::Feed, EpisodeKind::SensorFault})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct Episode {
  Millis at{};  // offset from scenario start
  EpisodeKind kind = EpisodeKind::Normal;

  double drop_g = 1500;               // ABSCOND
  Millis drop_over{std::chrono::minutes{30}};
  double relax_hours = 2;             // ABSCOND temperature time constant
  double g_per_day = 0;               // SWARM_BUILDUP, HONEY_FLOW
  double days = 0;
  double fall_weight_g = -2000;       // FALL
  double refill_ml = 500;             // FEED
  double consumption_ml_per_hour = 0;
  std::string field;                  // SENSOR_FAULT: temp, hum, syrup, weight, light
  std::string mode;                   //   stuck, dark (light), dropout (all)
  Millis duration{};                  //   SENSOR_FAULT, NORMAL
};

struct Scenario {
  std::string name = "scenario";
  std::string hive_id = "H1";
  std::string token;  // device token used by replay
  std::uint64_t seed = 1;
  Instant start{};
  Millis duration{std::chrono::hours{24}};
  Millis interval{std::chrono::seconds{60}};
  UtcOffset utc_offset{330};

  double colony_weight_g = 3000;
  double stores_weight_g = 5000;
  double syrup_ml = 500;
  double brood_temp_c = 31;
  double brood_hum_pct = 55;
  double ambient_mean_c = 25;
  double ambient_amplitude_c = 5;
  TimeOfDay ambient_peak{15 * 60};
  double forager_dip_g = 300;
  TimeOfDay dip_from{8 * 60};
  TimeOfDay dip_to{18 * 60};
  TimeOfDay sunrise{6 * 60};
  TimeOfDay sunset{19 * 60};

  double weight_sigma_g = 5;
  double temp_sigma = 0.2;
  double hum_sigma = 1;
  double syrup_sigma_ml = 0;

  std::vector<Episode> episodes;
};

/// Ground truth for one stretch of the trace. Detections inside it must be
/// exactly `expected` (each once); `tolerated` kinds may also appear.
struct Annotation {
  Instant start{};
  Instant end{};
  EpisodeKind episode = EpisodeKind::Normal;
  std::set<EventKind> expected;
  std::set<EventKind> tolerated;
};

struct Trace {
  std::vector<SensorReading> readings;
  std::vector<Annotation> annotations;  // contiguous, cover [start, start + duration)
};

struct ScenarioError {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string message;
};

// ---------------------------------------------------------------------------
// Scenario files: INI-style sections with key = value lines. [scenario],
// [baseline] and [noise] appear once; [episode] repeats, one per episode.
// '#' and ';' start comments.

namespace scenario_detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

struct Reader {
  std::size_t line;
  std::string key;
  std::string value;

  double number() const {
    double v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size() || !std::isfinite(v)) fail("expected a number");
    return v;
  }
  Millis duration() const {
    auto d = parse_duration(value);
    if (!d) fail("expected a duration such as 30m, 6h or 14d");
    return *d;
  }
  TimeOfDay tod() const {
    auto t = parse_time_of_day(value);
    if (!t) fail("expected HH:MM");
    return *t;
  }
  [[noreturn]] void fail(const std::string& why) const { throw ScenarioError{line, key + ": " + why}; }
};

inline void scenario_key(Scenario& s, const Reader& r) {
  if (r.key == "name") s.name = r.value;
  else if (r.key == "hive") s.hive_id = r.value;
  else if (r.key == "token") s.token = r.value;
  else if (r.key == "seed") s.seed = static_cast<std::uint64_t>(r.number());
  else if (r.key == "start") {
    auto t = parse_instant(r.value);
    if (!t) r.fail("expected an ISO-8601 instant");
    s.start = *t;
  } else if (r.key == "duration") s.duration = r.duration();
  else if (r.key == "interval") s.interval = r.duration();
  else if (r.key == "utc_offset") {
    auto o = parse_utc_offset(r.value);
    if (!o) r.fail("expected an offset such as +05:30");
    s.utc_offset = *o;
  } else r.fail("unknown key");
}

inline void baseline_key(Scenario& s, const Reader& r) {
  if (r.key == "colony_weight_g") s.colony_weight_g = r.number();
  else if (r.key == "stores_weight_g") s.stores_weight_g = r.number();
  else if (r.key == "syrup_ml") s.syrup_ml = r.number();
  else if (r.key == "brood_temp_c") s.brood_temp_c = r.number();
  else if (r.key == "brood_hum_pct") s.brood_hum_pct = r.number();
  else if (r.key == "ambient_mean_c") s.ambient_mean_c = r.number();
  else if (r.key == "ambient_amplitude_c") s.ambient_amplitude_c = r.number();
  else if (r.key == "ambient_peak") s.ambient_peak = r.tod();
  else if (r.key == "forager_dip_g") s.forager_dip_g = r.number();
  else if (r.key == "dip_from") s.dip_from = r.tod();
  else if (r.key == "dip_to") s.dip_to = r.tod();
  else if (r.key == "sunrise") s.sunrise = r.tod();
  else if (r.key == "sunset") s.sunset = r.tod();
  else r.fail("unknown key");
}

inline void noise_key(Scenario& s, const Reader& r) {
  if (r.key == "weight_sigma_g") s.weight_sigma_g = r.number();
  else if (r.key == "temp_sigma") s.temp_sigma = r.number();
  else if (r.key == "hum_sigma") s.hum_sigma = r.number();
  else if (r.key == "syrup_sigma_ml") s.syrup_sigma_ml = r.number();
  else r.fail("unknown key");
}

inline void episode_key(Episode& e, const Reader& r) {
  if (r.key == "at") e.at = r.duration();
  else if (r.key == "kind") {
    auto k = parse_episode_kind(r.value);
    if (!k) r.fail("unknown episode kind");
    e.kind = *k;
  } else if (r.key == "drop_g") e.drop_g = r.number();
  else if (r.key == "drop_over") e.drop_over = r.duration();
  else if (r.key == "relax_hours") e.relax_hours = r.number();
  else if (r.key == "g_per_day" || r.key == "gain_g_per_day") e.g_per_day = r.number();
  else if (r.key == "days") e.days = r.number();
  else if (r.key == "weight_g") e.fall_weight_g = r.number();
  else if (r.key == "refill_ml") e.refill_ml = r.number();
  else if (r.key == "consumption_ml_per_hour") e.consumption_ml_per_hour = r.number();
  else if (r.key == "field") e.field = r.value;
  else if (r.key == "mode") e.mode = r.value;
  else if (r.key == "duration") e.duration = r.duration();
  else r.fail("unknown key");
}

}  // namespace scenario_detail

/// Weight-channel span of an episode, as [begin, end) offsets.
inline std::pair<Millis, Millis> weight_span(const Episode& e, Millis total) {
  using std::chrono::duration_cast;
  switch (e.kind) {
    case EpisodeKind::Abscond: return {e.at, e.at + e.drop_over};
    case EpisodeKind::SwarmBuildup:
    case EpisodeKind::HoneyFlow:
      return {e.at, e.at + duration_cast<Millis>(std::chrono::duration<double, std::ratio<86400>>(e.days))};
    case EpisodeKind::Theft:
    case EpisodeKind::Fall: return {e.at, std::max(total, e.at + Millis{1})};
    default: return {e.at, e.at};
  }
}

inline std::optional<ScenarioError> check_scenario(const Scenario& s) {
  if (s.interval < std::chrono::seconds{1}) return ScenarioError{0, "interval must be at least 1 s"};
  if (s.duration <= Millis{0}) return ScenarioError{0, "duration must be positive"};
  if (s.hive_id.empty()) return ScenarioError{0, "hive is empty"};
  if (s.weight_sigma_g < 0 || s.temp_sigma < 0 || s.hum_sigma < 0 || s.syrup_sigma_ml < 0)
    return ScenarioError{0, "noise sigmas must be >= 0"};
  if (s.dip_from >= s.dip_to || s.sunrise >= s.sunset) return ScenarioError{0, "daily windows must have from < to"};
  std::vector<std::pair<Millis, Millis>> weight;
  std::map<std::string, std::vector<std::pair<Millis, Millis>>> faults;
  for (const auto& e : s.episodes) {
    if (e.at < Millis{0} || e.at >= s.duration) return ScenarioError{0, std::string(to_string(e.kind)) + ": at is outside the scenario"};
    switch (e.kind) {
      case EpisodeKind::Abscond:
        if (e.drop_g <= 0 || e.drop_over <= Millis{0} || e.relax_hours <= 0) return ScenarioError{0, "ABSCOND needs drop_g, drop_over, relax_hours > 0"};
        break;
      case EpisodeKind::SwarmBuildup:
      case EpisodeKind::HoneyFlow:
        if (e.days <= 0) return ScenarioError{0, std::string(to_string(e.kind)) + " needs days > 0"};
        break;
      case EpisodeKind::Feed:
        if (e.refill_ml < 0 || e.refill_ml > kSyrupRange.high || e.consumption_ml_per_hour < 0)
          return ScenarioError{0, "FEED needs refill_ml in range and consumption >= 0"};
        break;
      case EpisodeKind::SensorFault: {
        static const std::set<std::string> fields{"temp", "hum", "syrup", "weight", "light"};
        if (!fields.count(e.field)) return ScenarioError{0, "SENSOR_FAULT field must be temp, hum, syrup, weight or light"};
        if (e.mode != "stuck" && e.mode != "dropout" && !(e.mode == "dark" && e.field == "light"))
          return ScenarioError{0, "SENSOR_FAULT mode must be stuck, dropout or dark (light only)"};
        if (e.duration <= Millis{0}) return ScenarioError{0, "SENSOR_FAULT needs a duration"};
        auto& spans = faults[e.mode == "dropout" ? "*" : e.field];
        for (const auto& [a, b] : spans)
          if (e.at < b && a < e.at + e.duration) return ScenarioError{0, "overlapping SENSOR_FAULT episodes"};
        spans.emplace_back(e.at, e.at + e.duration);
        break;
      }
      default: break;
    }
    const auto span = weight_span(e, s.duration);
    if (span.first != span.second) {
      for (const auto& [a, b] : weight)
        if (span.first < b && a < span.second)
          return ScenarioError{0, std::string(to_string(e.kind)) + " overlaps another weight episode"};
      weight.push_back(span);
    }
  }
  return std::nullopt;
}

inline Result<Scenario, ScenarioError> parse_scenario(std::string_view text) {
  using namespace scenario_detail;
  Scenario s;
  std::string section;
  std::size_t line_no = 0;
  try {
    while (!text.empty()) {
      const auto nl = text.find('\n');
      std::string line = trim(text.substr(0, nl));
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (auto c = line.find_first_of("#;"); c != std::string::npos) line = trim(line.substr(0, c));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ScenarioError{line_no, "unterminated section header"};
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        if (section == "episode") s.episodes.emplace_back();
        else if (section != "scenario" && section != "baseline" && section != "noise")
          throw ScenarioError{line_no, "unknown section [" + section + "]"};
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ScenarioError{line_no, "expected key = value"};
      const Reader r{line_no, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1))};
      if (section == "scenario") scenario_key(s, r);
      else if (section == "baseline") baseline_key(s, r);
      else if (section == "noise") noise_key(s, r);
      else if (section == "episode") episode_key(s.episodes.back(), r);
      else throw ScenarioError{line_no, "key outside a section"};
    }
  } catch (const ScenarioError& e) {
    return e;
  }
  std::stable_sort(s.episodes.begin(), s.episodes.end(), [](const Episode& a, const Episode& b) { return a.at < b.at; });
  if (auto err = check_scenario(s)) return *err;
  return s;
}

inline Result<Scenario, ScenarioError> load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) return ScenarioError{0, "cannot read " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Generation

inline std::set<EventKind> expected_events(const Episode& e) {
  switch (e.kind) {
    case EpisodeKind::Abscond: return {EventKind::Absconding};
    case EpisodeKind::SwarmBuildup: return {EventKind::SwarmRisk};
    case EpisodeKind::Theft: return {EventKind::Theft};
    case EpisodeKind::Fall: return {EventKind::Fall};
    case EpisodeKind::HoneyFlow: return {EventKind::HoneyFlow};
    case EpisodeKind::Feed: return {EventKind::RefillDue};
    case EpisodeKind::SensorFault:
      if (e.field == "light" && e.mode == "dark") return {EventKind::LightAnomaly};
      return {};
    case EpisodeKind::Normal: return {};
  }
  return {};
}

// Weight alone cannot tell a strong flow from colony growth.
inline std::set<EventKind> tolerated_events(const Episode& e) {
  if (e.kind == EpisodeKind::HoneyFlow) return {EventKind::SwarmRisk};
  if (e.kind == EpisodeKind::SwarmBuildup) return {EventKind::HoneyFlow};
  return {};
}

namespace sim_detail {

inline double round_to(double v, double step) { return std::round(v / step) * step; }

inline double hours_of(TimeOfDay t) { return static_cast<double>(t.count()) / 60.0; }

}  // namespace sim_detail

/// Pure function of the scenario (including its seed).
inline Result<Trace, ScenarioError> generate(const Scenario& s) {
  using namespace sim_detail;
  if (auto err = check_scenario(s)) return *err;
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  auto noise = [&](double sigma) { return sigma > 0 ? sigma * unit(rng) : 0.0; };

  Trace trace;
  const auto n = static_cast<std::int64_t>(s.duration / s.interval);
  trace.readings.reserve(static_cast<std::size_t>(n));

  // state carried across readings
  SensorReading last{};
  bool have_last = false;

  for (std::int64_t i = 0; i < n; ++i) {
    const Millis off = s.interval * i;
    const Instant t = s.start + off;
    const double tod_h = static_cast<double>(local_time_of_day(t, s.utc_offset).count()) / 60.0 +
                         static_cast<double>((t.time_since_epoch() % std::chrono::minutes{1}).count()) / 60000.0;
    const double ambient =
        s.ambient_mean_c + s.ambient_amplitude_c * std::cos(2 * std::numbers::pi * (tod_h - hours_of(s.ambient_peak)) / 24.0);

    double colony = s.colony_weight_g;
    double stores = s.stores_weight_g;
    double forager_share = 1;
    double temp = s.brood_temp_c;
    double syrup = s.syrup_ml;
    std::optional<double> weight_override;
    bool dark_fault = false;
    bool dropout = false;
    std::set<std::string> stuck;

    for (const auto& e : s.episodes) {
      if (off < e.at) continue;
      const double since_h = std::chrono::duration<double, std::ratio<3600>>(off - e.at).count();
      switch (e.kind) {
        case EpisodeKind::Abscond: {
          const double frac = std::min(1.0, since_h / std::chrono::duration<double, std::ratio<3600>>(e.drop_over).count());
          colony -= e.drop_g * frac;
          forager_share *= 1 - frac;
          // colony gone: no more thermoregulation
          temp = ambient + (s.brood_temp_c - ambient) * std::exp(-since_h / e.relax_hours);
          break;
        }
        case EpisodeKind::SwarmBuildup: colony += e.g_per_day * std::min(since_h / 24.0, e.days); break;
        case EpisodeKind::HoneyFlow: stores += e.g_per_day * std::min(since_h / 24.0, e.days); break;
        case EpisodeKind::Theft: weight_override = 0; break;
        case EpisodeKind::Fall: weight_override = e.fall_weight_g; break;
        case EpisodeKind::Feed: syrup = std::max(0.0, e.refill_ml - e.consumption_ml_per_hour * since_h); break;
        case EpisodeKind::SensorFault:
          if (off < e.at + e.duration) {
            if (e.mode == "dropout") dropout = true;
            else if (e.mode == "dark") dark_fault = true;
            else stuck.insert(e.field);
          }
          break;
        case EpisodeKind::Normal: break;
      }
    }

    double dip = 0;
    const double from = hours_of(s.dip_from), to = hours_of(s.dip_to);
    if (tod_h >= from && tod_h < to) dip = s.forager_dip_g * forager_share * std::sin(std::numbers::pi * (tod_h - from) / (to - from));

    // draw noise in a fixed order every step so episodes do not shift the stream
    const double wn = noise(s.weight_sigma_g), tn = noise(s.temp_sigma), hn = noise(s.hum_sigma), sn = noise(s.syrup_sigma_ml);

    SensorReading r;
    r.hive_id = s.hive_id;
    r.timestamp = t;
    r.weight_g = round_to((weight_override ? *weight_override : colony + stores - dip) + wn, 0.01);
    r.temp_c = round_to(temp + tn, 0.1);
    r.humidity_pct = std::clamp(round_to(s.brood_hum_pct + hn, 1.0), kHumidityRange.low, kHumidityRange.high);
    r.syrup_ml = std::clamp(round_to(syrup + sn, 1.0), kSyrupRange.low, kSyrupRange.high);
    r.weight_g = std::clamp(r.weight_g, kWeightRange.low, kWeightRange.high);
    r.temp_c = std::clamp(r.temp_c, kTempRange.low, kTempRange.high);
    const TimeOfDay tod = local_time_of_day(t, s.utc_offset);
    r.light = tod >= s.sunrise && tod < s.sunset && !dark_fault;

    if (have_last) {
      if (stuck.count("temp")) r.temp_c = last.temp_c;
      if (stuck.count("hum")) r.humidity_pct = last.humidity_pct;
      if (stuck.count("syrup")) r.syrup_ml = last.syrup_ml;
      if (stuck.count("weight")) r.weight_g = last.weight_g;
      if (stuck.count("light")) r.light = last.light;
    }
    if (r.weight_g == 0) r.weight_g = 0;  // no negative zero
    last = r;
    have_last = true;
    if (!dropout) trace.readings.push_back(r);
  }

  // contiguous annotations: each episode owns time until the next one starts
  const Instant end = s.start + s.duration;
  Instant cursor = s.start;
  if (s.episodes.empty() || s.episodes.front().at > Millis{0})
    trace.annotations.push_back({s.start, s.episodes.empty() ? end : s.start + s.episodes.front().at, EpisodeKind::Normal, {}, {}});
  for (std::size_t i = 0; i < s.episodes.size(); ++i) {
    const auto& e = s.episodes[i];
    cursor = s.start + e.at;
    const Instant stop = i + 1 < s.episodes.size() ? s.start + s.episodes[i + 1].at : end;
    trace.annotations.push_back({cursor, stop, e.kind, expected_events(e), tolerated_events(e)});
  }
  return trace;
}

/// Empty when detections match the annotations one-to-one, else the first
/// mismatch. GATE_CHANGED is operational and ignored.
inline std::optional<std::string> check_alignment(const std::vector<Annotation>& annotations,
                                                  const std::vector<HiveEvent>& events) {
  std::vector<std::map<EventKind, int>> seen(annotations.size());
  for (const auto& e : events) {
    if (e.kind == EventKind::GateChanged) continue;
    auto it = std::find_if(annotations.begin(), annotations.end(), [&](const Annotation& a) {
      return e.detected_at >= a.start && e.detected_at < a.end;
    });
    if (it == annotations.end())
      return std::string(to_string(e.kind)) + " at " + format_iso8601(e.detected_at) + " is outside every annotation";
    if (it->tolerated.count(e.kind)) continue;
    if (!it->expected.count(e.kind))
      return std::string(to_string(e.kind)) + " at " + format_iso8601(e.detected_at) + " during " +
             std::string(to_string(it->episode));
    ++seen[static_cast<std::size_t>(it - annotations.begin())][e.kind];
  }
  for (std::size_t i = 0; i < annotations.size(); ++i)
    for (auto k : annotations[i].expected)
      if (seen[i][k] != 1)
        return std::string(to_string(annotations[i].episode)) + " expected one " + std::string(to_string(k)) +
               ", saw " + std::to_string(seen[i][k]);
  return std::nullopt;
}

/// Engine plus gate over a whole trace, in process.
inline std::vector<HiveEvent> detect_offline(const std::vector<SensorReading>& readings, const HiveConfig& cfg) {
  HiveEngine engine(cfg);
  GateController gate(cfg);
  std::vector<HiveEvent> out;
  for (const auto& r : readings) {
    if (auto evs = engine.step(r)) out.insert(out.end(), evs->begin(), evs->end());
    auto g = gate.step(r.timestamp, r.light);
    out.insert(out.end(), g.events.begin(), g.events.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayStats {
  std::size_t sent = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double duration_s = 0;
  std::vector<std::string> commands;  // "<ISO time> OPEN|CLOSE" as received
};

struct ReplayOptions {
  double speed = 1;          // 0 sends back to back
  std::string token;         // device token, defaults to the scenario's
  int retries = 3;           // extra attempts per reading on transport failure, 5xx or 429
  Millis retry_delay{std::chrono::milliseconds{100}};
  std::size_t poll_every = 10;  // readings between /commands polls, 0 disables
  std::function<void(const SensorReading&)> before_send;  // e.g. advance a virtual clock
  std::function<void(Millis)> sleep = [](Millis d) { std::this_thread::sleep_for(d); };
};

namespace sim_detail {

inline std::string query_for(const SensorReading& r, const std::string& token) {
  return "/ingest?hive=" + httplib::detail::encode_query_param(r.hive_id) + "&temp=" + format_number(r.temp_c) +
         "&hum=" + format_number(r.humidity_pct) + "&syrup=" + format_number(r.syrup_ml) +
         "&weight=" + format_number(r.weight_g) + "&light=" + (r.light ? "1" : "0") +
         "&token=" + httplib::detail::encode_query_param(token);
}

inline void poll_commands(httplib::Client& cli, const std::string& hive, const std::string& token, ReplayStats& st) {
  auto res = cli.Get("/hives/" + hive + "/commands?token=" + httplib::detail::encode_query_param(token));
  if (!res || res->status != 200) return;
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (!j.is_array()) return;
  for (const auto& c : j) st.commands.push_back(c.value("issued_at", "") + " " + c.value("command", ""));
}

}  // namespace sim_detail

/// Sends readings in order to a live server, pacing by interval / speed.
inline ReplayStats replay_http(const std::vector<SensorReading>& readings, const std::string& base_url,
                               const ReplayOptions& opt) {
  ReplayStats st;
  const auto t0 = std::chrono::steady_clock::now();
  httplib::Client cli(base_url);
  cli.set_keep_alive(true);
  cli.set_connection_timeout(std::chrono::seconds{2});
  for (std::size_t i = 0; i < readings.size(); ++i) {
    const auto& r = readings[i];
    if (i > 0 && opt.speed > 0) {
      const auto gap = std::chrono::duration<double, std::milli>(r.timestamp - readings[i - 1].timestamp) / opt.speed;
      opt.sleep(std::chrono::duration_cast<Millis>(gap));
    }
    if (opt.before_send) opt.before_send(r);
    ++st.sent;
    bool ok = false;
    Millis wait = opt.retry_delay;
    for (int attempt = 0; attempt <= opt.retries; ++attempt) {
      if (attempt > 0) opt.sleep(wait);
      wait = opt.retry_delay;
      auto res = cli.Get(sim_detail::query_for(r, opt.token));
      if (res && res->status == 200) {
        ok = true;
        break;
      }
      if (res && res->status != 429 && res->status < 500) break;  // the server said no
      if (res && res->status == 429 && res->has_header("Retry-After")) {
        // The server paces each hive; faster replays get stretched to its limit.
        const auto secs = std::atoi(res->get_header_value("Retry-After").c_str());
        wait = std::max(wait, Millis{std::chrono::seconds{secs}});
      }
    }
    ok ? ++st.accepted : ++st.rejected;
    if (opt.poll_every > 0 && (i + 1) % opt.poll_every == 0) sim_detail::poll_commands(cli, r.hive_id, opt.token, st);
  }
  if (opt.poll_every > 0 && !readings.empty()) sim_detail::poll_commands(cli, readings.front().hive_id, opt.token, st);
  st.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

/// Writes the readings as a hive log CSV export.
inline ReplayStats replay_csv(const std::vector<SensorReading>& readings, const std::string& path, UtcOffset display) {
  ReplayStats st;
  const auto t0 = std::chrono::steady_clock::now();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  st.sent = readings.size();
  if (!out) {
    st.rejected = readings.size();
    return st;
  }
  out << format_csv(readings, display);
  out.flush();
  (out ? st.accepted : st.rejected) = readings.size();
  st.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

}  // namespace hivelink
