#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hivelink/detectors.hpp"
#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/time.hpp"

namespace hivelink {

using nlohmann::json;

inline json to_json(const SensorReading& r) {
  return {{"hive_id", r.hive_id},
          {"timestamp", format_iso8601(r.timestamp)},
          {"temp_c", r.temp_c},
          {"humidity_pct", r.humidity_pct},
          {"syrup_ml", r.syrup_ml},
          {"weight_g", r.weight_g},
          {"light", r.light}};
}

inline json to_json(const HiveEvent& e) {
  return {{"hive_id", e.hive_id},
          {"kind", to_string(e.kind)},
          {"severity", to_string(e.severity())},
          {"window_start", format_iso8601(e.window_start)},
          {"window_end", format_iso8601(e.window_end)},
          {"detected_at", format_iso8601(e.detected_at)},
          {"evidence", e.evidence}};
}

inline std::optional<HiveEvent> event_from_json(const json& j) {
  try {
    HiveEvent e;
    e.hive_id = j.at("hive_id").get<std::string>();
    auto k = parse_event_kind(j.at("kind").get<std::string>());
    auto a = parse_instant(j.at("window_start").get<std::string>());
    auto b = parse_instant(j.at("window_end").get<std::string>());
    auto d = parse_instant(j.at("detected_at").get<std::string>());
    if (!k || !a || !b || !d) return std::nullopt;
    e.kind = *k;
    e.window_start = *a;
    e.window_end = *b;
    e.detected_at = *d;
    e.evidence = j.at("evidence").get<std::map<std::string, double>>();
    return e;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline json to_json(const HoneyFlowEstimate& e) {
  return {{"slope_g_per_day", e.slope_g_per_day},
          {"classification", to_string(e.classification)},
          {"eta_days_to_full", e.eta_days_to_full ? json(*e.eta_days_to_full) : json(nullptr)},
          {"accumulated_g", e.accumulated_g}};
}

inline json to_json(const RefillForecast& f) {
  return {{"current_ml", f.current_ml},
          {"slope_ml_per_hour", f.slope_ml_per_hour},
          {"eta_hours_to_empty", f.eta_hours_to_empty ? json(*f.eta_hours_to_empty) : json(nullptr)}};
}

/// Process-wide settings plus every hive.
struct ServerConfig {
  std::string data_dir = "hivelink-data";
  std::string bind = "127.0.0.1:8080";
  bool fsync = false;
  std::size_t ingest_queue_capacity = 4096;
  std::size_t alert_queue_capacity = 1024;
  int dedup_hours = 12;
  int snapshot_every = 1000;  // readings between engine snapshots
  std::vector<HiveConfig> hives;
};

namespace config_detail {

inline Band band(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::runtime_error("band must be [low, high]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline TimeOfDay tod(const json& j) {
  auto t = parse_time_of_day(j.get<std::string>());
  if (!t) throw std::runtime_error("time of day must be HH:MM");
  return *t;
}

inline void thresholds(HiveConfig& c, const json& t) {
  for (const auto& [k, v] : t.items()) {
    if (k == "tare_tolerance_g") c.tare_tolerance_g = v.get<double>();
    else if (k == "ambient_temp_c") c.ambient_temp_c = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    else if (k == "temp_band") c.temp_band = band(v);
    else if (k == "humidity_band") c.humidity_band = band(v);
    else if (k == "abscond_drop_g") c.abscond_drop_g = band(v);
    else if (k == "abscond_window_min") c.abscond_window_min = v.get<int>();
    else if (k == "abscond_horizon_min") c.abscond_horizon_min = v.get<int>();
    else if (k == "abscond_ambient_tol_c") c.abscond_ambient_tol_c = v.get<double>();
    else if (k == "abscond_exit_min") c.abscond_exit_min = v.get<int>();
    else if (k == "theft_min_prior_g") c.theft_min_prior_g = v.get<double>();
    else if (k == "fall_threshold_g") c.fall_threshold_g = v.get<double>();
    else if (k == "swarm_gain_g") c.swarm_gain_g = v.get<double>();
    else if (k == "swarm_days") c.swarm_days = v.get<int>();
    else if (k == "swarm_cooldown_days") c.swarm_cooldown_days = v.get<int>();
    else if (k == "flow_band_g_per_day") c.flow_band_g_per_day = band(v);
    else if (k == "flow_min_g_per_day") c.flow_min_g_per_day = v.get<double>();
    else if (k == "super_capacity_g") c.super_capacity_g = v.get<double>();
    else if (k == "flow_fit_baselines") c.flow_fit_baselines = v.get<int>();
    else if (k == "refill_low_ml") c.refill_low_ml = v.get<double>();
    else if (k == "refill_eta_h") c.refill_eta_h = v.get<double>();
    else if (k == "refill_window_h") c.refill_window_h = v.get<int>();
    else if (k == "refill_min_history_h") c.refill_min_history_h = v.get<int>();
    else if (k == "refill_jump_ml") c.refill_jump_ml = v.get<double>();
    else if (k == "gate_close_time") c.gate_close_time = tod(v);
    else if (k == "gate_open_time") c.gate_open_time = tod(v);
    else if (k == "light_debounce_min") c.light_debounce_min = v.get<int>();
    else if (k == "light_anomaly_min") c.light_anomaly_min = v.get<int>();
    else if (k == "health_sustain_min") c.health_sustain_min = v.get<int>();
    else if (k == "health_rearm_min") c.health_rearm_min = v.get<int>();
    else if (k == "smoothing_k") c.smoothing_k = v.get<int>();
    else if (k == "baseline_from_min") c.baseline_from = std::chrono::minutes{v.get<int>()};
    else if (k == "baseline_to_min") c.baseline_to = std::chrono::minutes{v.get<int>()};
    else if (k == "buffer_capacity") c.buffer_capacity = v.get<std::size_t>();
    else if (k == "min_interval_ms") c.min_interval_ms = v.get<std::int64_t>();
    else throw std::runtime_error("unknown threshold '" + k + "'");
  }
}

inline AlertSink sink(const json& j) {
  AlertSink s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ifttt") s.kind = SinkKind::Ifttt;
  else if (kind == "webhook") s.kind = SinkKind::Webhook;
  else if (kind == "log") s.kind = SinkKind::Log;
  else throw std::runtime_error("unknown sink kind '" + kind + "'");
  s.base_url = j.value("base_url", s.kind == SinkKind::Ifttt ? "https://maker.ifttt.com" : "");
  s.event_name = j.value("event", "");
  s.key = j.value("key", "");
  s.path = j.value("path", "");
  s.rate_limit_per_hour = j.value("rate_limit_per_hour", 60);
  s.enabled = j.value("enabled", true);
  return s;
}

}  // namespace config_detail

/// Parses the server config document. See README for the schema.
inline Result<ServerConfig, std::string> parse_server_config(const json& j) {
  try {
    ServerConfig sc;
    sc.data_dir = j.value("data_dir", sc.data_dir);
    sc.bind = j.value("bind", sc.bind);
    const auto dur = j.value("durability", std::string("write"));
    if (dur != "write" && dur != "fsync") return std::string("durability must be \"write\" or \"fsync\"");
    sc.fsync = dur == "fsync";
    sc.ingest_queue_capacity = j.value("ingest_queue_capacity", sc.ingest_queue_capacity);
    sc.alert_queue_capacity = j.value("alert_queue_capacity", sc.alert_queue_capacity);
    sc.dedup_hours = j.value("dedup_hours", sc.dedup_hours);
    sc.snapshot_every = j.value("snapshot_every", sc.snapshot_every);
    for (const auto& h : j.at("hives")) {
      HiveConfig c;
      c.hive_id = h.at("id").get<std::string>();
      if (h.contains("registered_at")) {
        auto t = parse_instant(h["registered_at"].get<std::string>());
        if (!t) return "hive " + c.hive_id + ": bad registered_at";
        c.registered_at = *t;
      }
      if (h.contains("utc_offset")) {
        auto off = parse_utc_offset(h["utc_offset"].get<std::string>());
        if (!off) return "hive " + c.hive_id + ": bad utc_offset";
        c.utc_offset = *off;
      }
      c.api_token = h.at("api_token").get<std::string>();
      c.operator_token = h.at("operator_token").get<std::string>();
      c.read_token = h.at("read_token").get<std::string>();
      if (h.contains("thresholds")) config_detail::thresholds(c, h["thresholds"]);
      if (h.contains("sinks"))
        for (const auto& s : h["sinks"]) c.alert_sinks.push_back(config_detail::sink(s));
      if (auto err = check_config(c)) return "hive " + c.hive_id + ": " + *err;
      if (c.api_token.empty() || c.api_token == c.operator_token || c.api_token == c.read_token ||
          c.operator_token == c.read_token)
        return "hive " + c.hive_id + ": device, operator and read tokens must be distinct and non-empty";
      for (const auto& other : sc.hives)
        if (other.hive_id == c.hive_id) return "duplicate hive " + c.hive_id;
      sc.hives.push_back(std::move(c));
    }
    return sc;
  } catch (const std::exception& e) {
    return std::string("config: ") + e.what();
  }
}

inline Result<ServerConfig, std::string> load_server_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) return "cannot read config " + path;
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) return "config " + path + " is not valid JSON";
  return parse_server_config(j);
}

}  // namespace hivelink
