#pragma once

// Window-level forecasting rules shared by the streaming engine and the
// offline tools: honey flow, supplement depletion and swarm risk all work
// on short, already-collected series and are pure functions of them.

#include <algorithm>
#include <chrono>
#include <optional>
#include <span>
#include <vector>

#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/signal.hpp"

namespace hivelink {

enum class FlowClass : int { NoFlow = 0, ActiveFlow = 1, IdealFlow = 2 };

constexpr std::string_view to_string(FlowClass c) noexcept {
  switch (c) {
    case FlowClass::NoFlow: return "NO_FLOW";
    case FlowClass::ActiveFlow: return "ACTIVE_FLOW";
    case FlowClass::IdealFlow: return "IDEAL_FLOW";
  }
  return "?";
}

struct BaselinePoint {
  std::chrono::year_month_day date{};
  double weight_g = 0;

  friend bool operator==(const BaselinePoint&, const BaselinePoint&) = default;
};

struct HoneyFlowEstimate {
  double slope_g_per_day = 0;
  FlowClass classification = FlowClass::NoFlow;
  std::optional<double> eta_days_to_full;
  double accumulated_g = 0;
  double flow_start_g = 0;  // reference weight the accumulation counts from
};

struct RefillForecast {
  double current_ml = 0;
  double slope_ml_per_hour = 0;
  std::optional<double> eta_hours_to_empty;
};

enum class DetectorError { TooFewBaselines, TooFewPoints };

inline FlowClass classify_flow(double slope, const HiveConfig& cfg) {
  if (cfg.flow_band_g_per_day.contains(slope)) return FlowClass::IdealFlow;
  if (slope >= cfg.flow_min_g_per_day) return FlowClass::ActiveFlow;
  return FlowClass::NoFlow;
}

/// Slope over the last `flow_fit_baselines` daily baselines (all of them if
/// fewer, at least 3). Accumulation counts from `flow_start_g` when a flow
/// is already running, else from the lightest baseline in the fit window.
inline Result<HoneyFlowEstimate, DetectorError> estimate_honey_flow(
    std::span<const BaselinePoint> baselines, const HiveConfig& cfg,
    std::optional<double> flow_start_g = std::nullopt) {
  if (baselines.size() < 3) return DetectorError::TooFewBaselines;
  const auto n = std::min<std::size_t>(baselines.size(), static_cast<std::size_t>(cfg.flow_fit_baselines));
  const auto window = baselines.subspan(baselines.size() - n);
  const std::chrono::sys_days first{window.front().date};
  std::vector<FitPoint> pts;
  pts.reserve(n);
  for (const auto& b : window)
    pts.push_back({static_cast<double>((std::chrono::sys_days{b.date} - first).count()), b.weight_g});
  auto fit = linear_fit(pts);
  if (!fit) return DetectorError::TooFewBaselines;

  HoneyFlowEstimate est;
  est.slope_g_per_day = fit->slope;
  est.classification = classify_flow(fit->slope, cfg);
  if (est.classification != FlowClass::NoFlow) {
    double start = 0;
    if (flow_start_g) {
      start = *flow_start_g;
    } else {
      start = window.front().weight_g;
      for (const auto& b : window) start = std::min(start, b.weight_g);
    }
    est.flow_start_g = start;
    est.accumulated_g = std::max(0.0, window.back().weight_g - start);
  }
  if (est.slope_g_per_day > 0)
    est.eta_days_to_full = std::max(0.0, cfg.super_capacity_g - est.accumulated_g) / est.slope_g_per_day;
  return est;
}

struct SyrupPoint {
  Instant t{};
  double ml = 0;
};

/// Least-squares depletion forecast over the given syrup window (already
/// restricted to the fit horizon). Time axis is hours before the last point.
inline Result<RefillForecast, DetectorError> predict_refill(std::span<const SyrupPoint> window) {
  if (window.size() < 2) return DetectorError::TooFewPoints;
  const Instant last = window.back().t;
  std::vector<FitPoint> pts;
  pts.reserve(window.size());
  for (const auto& p : window) pts.push_back({hours_between(last, p.t), p.ml});
  auto fit = linear_fit(pts);
  if (!fit) return DetectorError::TooFewPoints;
  RefillForecast f;
  f.current_ml = window.back().ml;
  f.slope_ml_per_hour = fit->slope;
  if (f.slope_ml_per_hour < 0) f.eta_hours_to_empty = f.current_ml / -f.slope_ml_per_hour;
  return f;
}

/// Due when nearly empty or when the forecast reaches the horizon. The
/// horizon itself counts as due; the epsilon absorbs fit rounding there.
inline bool refill_due(const RefillForecast& f, const HiveConfig& cfg) {
  constexpr double kEps = 1e-9;
  return f.current_ml < cfg.refill_low_ml ||
         (f.eta_hours_to_empty && *f.eta_hours_to_empty <= cfg.refill_eta_h + kEps);
}

/// Gain of the newest baseline over the one exactly `swarm_days` earlier,
/// when that earlier baseline exists and the gain reaches the threshold.
inline std::optional<double> detect_swarm_risk(std::span<const BaselinePoint> baselines,
                                               const HiveConfig& cfg) {
  if (baselines.empty()) return std::nullopt;
  const auto& latest = baselines.back();
  const auto target = std::chrono::sys_days{latest.date} - std::chrono::days{cfg.swarm_days};
  for (const auto& b : baselines) {
    if (std::chrono::sys_days{b.date} == target) {
      const double gain = latest.weight_g - b.weight_g;
      if (gain >= cfg.swarm_gain_g) return gain;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace hivelink
