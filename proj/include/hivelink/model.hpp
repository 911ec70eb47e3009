#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hivelink/time.hpp"

namespace hivelink {

/// One timestamped sample for a hive: a row of the hive log.
struct SensorReading {
  std::string hive_id;
  Instant timestamp{};
  double temp_c = 0;
  double humidity_pct = 0;
  double syrup_ml = 0;
  double weight_g = 0;  // tared by the device, may be negative
  bool light = false;   // true = daylight detected

  friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

/// Closed numeric interval [low, high].
struct Band {
  double low = 0;
  double high = 0;

  bool contains(double v) const noexcept { return v >= low && v <= high; }
  bool valid() const noexcept { return low < high; }
  friend bool operator==(const Band&, const Band&) = default;
};

// Physical bounds enforced at validation.
inline constexpr Band kTempRange{-20, 60};
inline constexpr Band kHumidityRange{0, 100};
inline constexpr Band kSyrupRange{0, 5000};
inline constexpr Band kWeightRange{-5000, 20000};

enum class SinkKind { Ifttt, Webhook, Log };

struct AlertSink {
  SinkKind kind = SinkKind::Log;
  std::string base_url;    // ifttt: https://maker.ifttt.com, webhook: full URL
  std::string event_name;  // ifttt only
  std::string key;         // ifttt only
  std::string path;        // log: file path ("" = stderr)
  int rate_limit_per_hour = 60;
  bool enabled = true;
};

/// Per-hive calibration, thresholds, schedule and alert routing.
/// Every default comes from the field guidance for hive conditions,
/// converted to grams; see README for the table.
struct HiveConfig {
  std::string hive_id;
  Instant registered_at{};
  UtcOffset utc_offset{330};

  double tare_tolerance_g = 200;
  std::optional<double> ambient_temp_c;
  Band temp_band{30, 32};
  Band humidity_band{50, 60};

  Band abscond_drop_g{800, 2500};
  int abscond_window_min = 60;
  int abscond_horizon_min = 360;
  double abscond_ambient_tol_c = 1.5;
  int abscond_exit_min = 60;

  double theft_min_prior_g = 2000;
  double fall_threshold_g = -300;

  double swarm_gain_g = 1500;
  int swarm_days = 7;
  int swarm_cooldown_days = 14;

  Band flow_band_g_per_day{200, 300};
  double flow_min_g_per_day = 150;
  double super_capacity_g = 4500;
  int flow_fit_baselines = 5;

  double refill_low_ml = 50;
  double refill_eta_h = 24;
  int refill_window_h = 6;
  int refill_min_history_h = 2;
  double refill_jump_ml = 100;

  TimeOfDay gate_close_time{19 * 60};
  TimeOfDay gate_open_time{6 * 60};
  int light_debounce_min = 5;
  int light_anomaly_min = 30;

  int health_sustain_min = 120;
  int health_rearm_min = 60;
  int smoothing_k = 5;

  // Nighttime reference window for daily baselines, relative to local midnight.
  std::chrono::minutes baseline_from{-60};
  std::chrono::minutes baseline_to{60};

  std::size_t buffer_capacity = 1 << 16;
  std::int64_t min_interval_ms = 1000;

  std::vector<AlertSink> alert_sinks;
  std::string api_token;       // device writes
  std::string operator_token;  // gate commands
  std::string read_token;      // researcher reads
};

/// Empty when the config satisfies its invariants, else a description.
inline std::optional<std::string> check_config(const HiveConfig& c) {
  if (c.hive_id.empty()) return "hive_id is empty";
  if (!c.temp_band.valid()) return "temp_band low must be < high";
  if (!c.humidity_band.valid()) return "humidity_band low must be < high";
  if (!c.abscond_drop_g.valid()) return "abscond_drop_g low must be < high";
  if (!c.flow_band_g_per_day.valid()) return "flow_band_g_per_day low must be < high";
  if (c.smoothing_k < 1 || c.smoothing_k % 2 == 0) return "smoothing_k must be odd and >= 1";
  if (!(c.gate_open_time < c.gate_close_time)) return "gate_open_time must precede gate_close_time";
  if (c.gate_close_time >= kMinutesPerDay) return "gate_close_time out of range";
  if (!(c.baseline_from < c.baseline_to)) return "baseline window is empty";
  if (c.baseline_to - c.baseline_from > kMinutesPerDay) return "baseline window longer than a day";
  if (c.abscond_window_min <= 0 || c.health_sustain_min <= 0) return "window lengths must be positive";
  if (c.swarm_days <= 0) return "swarm_days must be positive";
  if (c.flow_fit_baselines < 3) return "flow_fit_baselines must be >= 3";
  if (c.buffer_capacity < 16) return "buffer_capacity too small";
  if (c.tare_tolerance_g < 0) return "tare_tolerance_g must be >= 0";
  for (const auto& s : c.alert_sinks) {
    if (s.rate_limit_per_hour < 1) return "sink rate limit must be >= 1 per hour";
    if (s.kind == SinkKind::Ifttt && (s.event_name.empty() || s.key.empty() || s.base_url.empty()))
      return "ifttt sink needs base_url, event and key";
    if (s.kind == SinkKind::Webhook && s.base_url.rfind("http", 0) != 0)
      return "webhook sink needs an http(s) URL";
  }
  return std::nullopt;
}

enum class EventKind : std::uint8_t {
  HealthAnomaly,
  Absconding,
  SwarmRisk,
  Theft,
  Fall,
  HoneyFlow,
  RefillDue,
  GateChanged,
  LightAnomaly,
};

inline constexpr std::array kAllEventKinds{
    EventKind::HealthAnomaly, EventKind::Absconding, EventKind::SwarmRisk,
    EventKind::Theft,         EventKind::Fall,       EventKind::HoneyFlow,
    EventKind::RefillDue,     EventKind::GateChanged, EventKind::LightAnomaly};

enum class Severity : std::uint8_t { Info, Warning, Critical };

constexpr Severity severity_of(EventKind k) noexcept {
  switch (k) {
    case EventKind::Theft:
    case EventKind::Fall:
    case EventKind::Absconding:
      return Severity::Critical;
    case EventKind::HealthAnomaly:
    case EventKind::RefillDue:
    case EventKind::LightAnomaly:
      return Severity::Warning;
    default:
      return Severity::Info;
  }
}

constexpr std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::HealthAnomaly: return "HEALTH_ANOMALY";
    case EventKind::Absconding: return "ABSCONDING";
    case EventKind::SwarmRisk: return "SWARM_RISK";
    case EventKind::Theft: return "THEFT";
    case EventKind::Fall: return "FALL";
    case EventKind::HoneyFlow: return "HONEY_FLOW";
    case EventKind::RefillDue: return "REFILL_DUE";
    case EventKind::GateChanged: return "GATE_CHANGED";
    case EventKind::LightAnomaly: return "LIGHT_ANOMALY";
  }
  return "?";
}

constexpr std::string_view to_string(Severity s) noexcept {
  switch (s) {
    case Severity::Info: return "INFO";
    case Severity::Warning: return "WARNING";
    case Severity::Critical: return "CRITICAL";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : kAllEventKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// Evidence keys each kind always carries.
inline std::vector<std::string_view> evidence_keys(EventKind k) {
  switch (k) {
    case EventKind::HealthAnomaly: return {"mean_hum", "mean_temp", "minutes_out"};
    case EventKind::Absconding: return {"drop_g", "minutes", "temp_after"};
    case EventKind::SwarmRisk: return {"days", "gain_g"};
    case EventKind::Theft: return {"after_g", "prior_g"};
    case EventKind::Fall: return {"weight_g"};
    case EventKind::HoneyFlow: return {"accumulated_g", "classification", "eta_days", "slope_g_per_day"};
    case EventKind::RefillDue: return {"current_ml", "eta_hours"};
    case EventKind::GateChanged: return {"mode", "position"};
    case EventKind::LightAnomaly: return {"dark_minutes"};
  }
  return {};
}

/// A detected condition. Evidence keys are fixed per kind (see evidence_keys);
/// an absent optional quantity is encoded as -1.
struct HiveEvent {
  std::string hive_id;
  EventKind kind = EventKind::HealthAnomaly;
  Instant window_start{};
  Instant window_end{};
  Instant detected_at{};
  std::map<std::string, double> evidence;

  Severity severity() const noexcept { return severity_of(kind); }
  friend bool operator==(const HiveEvent&, const HiveEvent&) = default;
};

}  // namespace hivelink
