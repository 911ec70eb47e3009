#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/time.hpp"

namespace hivelink {

enum class GatePosition : int { Open = 0, Closed = 1 };
enum class GateMode : int { Auto = 0, OverrideOpen = 1, OverrideClosed = 2 };
enum class GateAction { Open, Close, Auto };
enum class GateError { BadTtl };

constexpr std::string_view to_string(GatePosition p) noexcept { return p == GatePosition::Open ? "OPEN" : "CLOSED"; }

constexpr std::string_view to_string(GateMode m) noexcept {
  switch (m) {
    case GateMode::Auto: return "AUTO";
    case GateMode::OverrideOpen: return "OVERRIDE_OPEN";
    case GateMode::OverrideClosed: return "OVERRIDE_CLOSED";
  }
  return "?";
}

inline std::optional<GateAction> parse_gate_action(std::string_view s) {
  if (s == "open") return GateAction::Open;
  if (s == "close") return GateAction::Close;
  if (s == "auto") return GateAction::Auto;
  return std::nullopt;
}

struct GateState {
  GatePosition position = GatePosition::Open;  // fail-open until the first step
  GateMode mode = GateMode::Auto;
  std::optional<Instant> override_expiry;
  bool debounced_light = true;
  Instant last_transition{};

  // debounce and anomaly bookkeeping
  bool initialized = false;
  bool raw_light = true;
  Instant raw_since{};
  bool anomaly_fired = false;

  friend bool operator==(const GateState&, const GateState&) = default;
};

struct GateCommand {
  GatePosition position = GatePosition::Open;  // OPEN or CLOSE
  Instant issued_at{};
};

struct GateOutput {
  std::optional<GateCommand> command;
  std::vector<HiveEvent> events;
};

/// True when the schedule wants the gate closed at this local time of day.
inline bool schedule_closed(TimeOfDay tod, const HiveConfig& cfg) {
  return tod >= cfg.gate_close_time || tod < cfg.gate_open_time;
}

/// Diurnal gate state machine. The schedule decides the position in AUTO;
/// the light sensor only raises LIGHT_ANOMALY when it reads dark during
/// scheduled-open hours. Overrides hold the position until they expire.
class GateController {
public:
  explicit GateController(HiveConfig cfg, GateState st = {}) : cfg_(std::move(cfg)), st_(st) {}

  const GateState& state() const noexcept { return st_; }
  const HiveConfig& config() const noexcept { return cfg_; }

  GateOutput step(Instant now, bool light) {
    using std::chrono::minutes;
    GateOutput out;
    if (!st_.initialized) {
      st_.initialized = true;
      st_.debounced_light = st_.raw_light = light;
      st_.raw_since = now;
    }
    if (light != st_.raw_light) {
      st_.raw_light = light;
      st_.raw_since = now;
    }
    if (st_.raw_light != st_.debounced_light && now - st_.raw_since >= minutes{cfg_.light_debounce_min})
      st_.debounced_light = st_.raw_light;

    if (st_.mode != GateMode::Auto && st_.override_expiry && now >= *st_.override_expiry) {
      st_.mode = GateMode::Auto;
      st_.override_expiry.reset();
    }
    const TimeOfDay tod = local_time_of_day(now, cfg_.utc_offset);
    const bool sched_closed = schedule_closed(tod, cfg_);
    if (st_.mode == GateMode::Auto)
      move_to(sched_closed ? GatePosition::Closed : GatePosition::Open, now, out);

    if (st_.debounced_light || sched_closed) {
      st_.anomaly_fired = false;
    } else if (!st_.anomaly_fired) {
      const Instant open_start = local_midnight(local_date(now, cfg_.utc_offset), cfg_.utc_offset) + cfg_.gate_open_time;
      const Instant dark_from = std::max(st_.raw_since, open_start);
      if (now - dark_from > minutes{cfg_.light_anomaly_min}) {
        st_.anomaly_fired = true;
        HiveEvent e{cfg_.hive_id, EventKind::LightAnomaly, dark_from, now, now, {}};
        e.evidence = {{"dark_minutes", minutes_between(dark_from, now)}};
        out.events.push_back(std::move(e));
      }
    }
    return out;
  }

  Result<GateOutput, GateError> apply_override(GateAction action, int ttl_min, Instant now) {
    GateOutput out;
    if (action == GateAction::Auto) {
      // the schedule takes over at the next step
      st_.mode = GateMode::Auto;
      st_.override_expiry.reset();
      return out;
    }
    if (ttl_min < 1 || ttl_min > 1440) return GateError::BadTtl;
    st_.mode = action == GateAction::Open ? GateMode::OverrideOpen : GateMode::OverrideClosed;
    st_.override_expiry = now + std::chrono::minutes{ttl_min};
    move_to(action == GateAction::Open ? GatePosition::Open : GatePosition::Closed, now, out);
    return out;
  }

private:
  void move_to(GatePosition p, Instant now, GateOutput& out) {
    if (p == st_.position) return;
    st_.position = p;
    st_.last_transition = now;
    out.command = GateCommand{p, now};
    HiveEvent e{cfg_.hive_id, EventKind::GateChanged, now, now, now, {}};
    e.evidence = {{"position", static_cast<double>(static_cast<int>(p))},
                  {"mode", static_cast<double>(static_cast<int>(st_.mode))}};
    out.events.push_back(std::move(e));
  }

  HiveConfig cfg_;
  GateState st_;
};

inline nlohmann::json to_json(const GateState& s) {
  return {{"position", to_string(s.position)},
          {"mode", to_string(s.mode)},
          {"override_expiry", s.override_expiry ? nlohmann::json(format_iso8601(*s.override_expiry)) : nlohmann::json(nullptr)},
          {"debounced_light", s.debounced_light},
          {"last_transition", format_iso8601(s.last_transition)}};
}

/// Full state including debounce bookkeeping, for restart.
inline nlohmann::json gate_snapshot(const GateState& s) {
  return {{"position", static_cast<int>(s.position)},
          {"mode", static_cast<int>(s.mode)},
          {"override_expiry", s.override_expiry ? nlohmann::json(to_epoch_ms(*s.override_expiry)) : nlohmann::json(nullptr)},
          {"debounced_light", s.debounced_light},
          {"last_transition", to_epoch_ms(s.last_transition)},
          {"initialized", s.initialized},
          {"raw_light", s.raw_light},
          {"raw_since", to_epoch_ms(s.raw_since)},
          {"anomaly_fired", s.anomaly_fired}};
}

inline std::optional<GateState> gate_restore(const nlohmann::json& j) {
  try {
    GateState s;
    s.position = static_cast<GatePosition>(j.at("position").get<int>());
    s.mode = static_cast<GateMode>(j.at("mode").get<int>());
    if (!j.at("override_expiry").is_null()) s.override_expiry = from_epoch_ms(j.at("override_expiry").get<std::int64_t>());
    s.debounced_light = j.at("debounced_light").get<bool>();
    s.last_transition = from_epoch_ms(j.at("last_transition").get<std::int64_t>());
    s.initialized = j.at("initialized").get<bool>();
    s.raw_light = j.at("raw_light").get<bool>();
    s.raw_since = from_epoch_ms(j.at("raw_since").get<std::int64_t>());
    s.anomaly_fired = j.at("anomaly_fired").get<bool>();
    return s;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace hivelink
