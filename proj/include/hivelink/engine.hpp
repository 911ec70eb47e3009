#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hivelink/detectors.hpp"
#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/signal.hpp"

namespace hivelink {

/// A reading after median smoothing of the weight channel. Sample i is
/// finalized when reading i + k/2 arrives, so it carries the same smoothed
/// weight a whole-trace smooth() would give it.
struct Sample {
  Instant t{};
  double weight_g = 0;
  double temp_c = 0;
  double humidity_pct = 0;
  double syrup_ml = 0;
};

struct FallState {
  int below_run = 0;
  bool fired = false;
};

struct TheftState {
  struct Pending {
    Instant at{};
    double prior_g = 0;
    Instant prior_t{};
    double after_g = 0;
    int confirmations_left = 0;
  };
  std::optional<Pending> pending;
  bool latched = false;  // until the weight is back above theft_min_prior_g
};

struct AbscondState {
  struct Armed {
    Instant at{};
    double ref_g = 0;
    Instant ref_t{};
    std::optional<Instant> out_since;
  };
  std::optional<Armed> armed;
  bool latched = false;  // until the drop has left the reference window
};

struct HealthState {
  bool fired = false;
  std::optional<Instant> out_since;
  std::optional<Instant> in_since;
  double run_temp_sum = 0;
  double run_hum_sum = 0;
  std::size_t run_count = 0;
};

struct RefillState {
  bool fired = false;
  std::optional<Instant> since;  // start of the current feeding
  std::optional<RefillForecast> forecast;
};

struct BaselineState {
  std::optional<std::chrono::year_month_day> pending_date;
  std::vector<double> pending_values;
  std::vector<BaselinePoint> history;
  std::optional<std::chrono::year_month_day> last_swarm;
  FlowClass flow_class = FlowClass::NoFlow;
  std::optional<double> flow_start_g;
  std::optional<HoneyFlowEstimate> estimate;
};

struct EngineState {
  std::uint64_t readings_seen = 0;
  std::uint64_t out_of_order = 0;
  std::optional<Instant> last_reading_t;
  std::optional<Instant> first_sample_t;
  std::deque<SensorReading> raw;  // the last k readings, awaiting finalization
  std::deque<Sample> samples;     // finalized, pruned to the longest detector horizon
  FallState fall;
  TheftState theft;
  AbscondState abscond;
  HealthState health;
  RefillState refill;
  BaselineState baseline;
};

enum class EngineError { OutOfOrderReading };

/// Streaming evaluation of every hive-condition rule for one hive.
///
/// Deterministic: all time comes from reading timestamps. Within one step
/// events come out in the order FALL, THEFT, ABSCONDING, HEALTH_ANOMALY,
/// REFILL_DUE, SWARM_RISK, HONEY_FLOW. FALL, THEFT and ABSCONDING are
/// mutually exclusive for one weight collapse: a pending theft is confirmed
/// only after two further samples stay above the fall threshold, and either
/// of them firing cancels an armed absconding check.
class HiveEngine {
public:
  static constexpr int kSnapshotVersion = 1;

  explicit HiveEngine(HiveConfig cfg) : cfg_(std::move(cfg)) {}

  const HiveConfig& config() const noexcept { return cfg_; }
  const EngineState& state() const noexcept { return st_; }

  std::optional<HoneyFlowEstimate> honey_flow() const { return st_.baseline.estimate; }
  std::optional<RefillForecast> refill() const { return st_.refill.forecast; }
  const std::vector<BaselinePoint>& baselines() const { return st_.baseline.history; }

  Result<std::vector<HiveEvent>, EngineError> step(const SensorReading& r) {
    if (st_.last_reading_t && r.timestamp < *st_.last_reading_t) {
      ++st_.out_of_order;
      return EngineError::OutOfOrderReading;
    }
    st_.last_reading_t = r.timestamp;
    st_.raw.push_back(r);
    ++st_.readings_seen;
    std::vector<HiveEvent> events;
    const auto h = static_cast<std::size_t>(cfg_.smoothing_k / 2);
    if (st_.readings_seen > h) {
      const std::uint64_t j = st_.readings_seen - 1 - h;
      const std::size_t half = std::min<std::uint64_t>(h, j);
      const std::size_t pos = st_.raw.size() - 1 - h;
      window_.clear();
      for (std::size_t i = pos - half; i <= pos + half; ++i) window_.push_back(st_.raw[i].weight_g);
      auto mid = window_.begin() + static_cast<std::ptrdiff_t>(half);
      std::nth_element(window_.begin(), mid, window_.end());
      const auto& src = st_.raw[pos];
      process(Sample{src.timestamp, *mid, src.temp_c, src.humidity_pct, src.syrup_ml}, r.timestamp,
              events);
    }
    while (st_.raw.size() > 2 * h + 1) st_.raw.pop_front();
    return events;
  }

  nlohmann::json snapshot() const;
  static Result<HiveEngine, std::string> restore(const nlohmann::json& j, HiveConfig cfg);

private:
  HiveEvent make_event(EventKind kind, Instant start, Instant end, Instant now) const {
    HiveEvent e;
    e.hive_id = cfg_.hive_id;
    e.kind = kind;
    e.window_start = start;
    e.window_end = end;
    e.detected_at = now;
    return e;
  }

  void process(const Sample& s, Instant now, std::vector<HiveEvent>& out) {
    using std::chrono::minutes;
    st_.samples.push_back(s);
    if (!st_.first_sample_t) st_.first_sample_t = s.t;
    prune(s.t);
    const auto& S = st_.samples;
    const std::size_t n = S.size();
    bool collapse = false;

    // Fall: below the threshold for 3 consecutive samples, once per run.
    auto& fall = st_.fall;
    if (s.weight_g < cfg_.fall_threshold_g) {
      ++fall.below_run;
    } else {
      fall.below_run = 0;
      fall.fired = false;
    }
    if (fall.below_run >= 3 && !fall.fired) {
      fall.fired = true;
      collapse = true;
      auto e = make_event(EventKind::Fall, S[n - 3].t, s.t, now);
      e.evidence = {{"weight_g", s.weight_g}};
      out.push_back(std::move(e));
    }

    // Theft: near zero within 3 samples of a heavy hive, confirmed once two
    // more samples rule out a fall.
    auto& theft = st_.theft;
    if (s.weight_g >= cfg_.theft_min_prior_g) theft.latched = false;
    if (theft.pending) {
      if (s.weight_g < cfg_.fall_threshold_g) {
        theft.pending.reset();
        theft.latched = true;
      } else if (--theft.pending->confirmations_left == 0) {
        const auto p = *theft.pending;
        theft.pending.reset();
        theft.latched = true;
        collapse = true;
        auto e = make_event(EventKind::Theft, p.prior_t, p.at, now);
        e.evidence = {{"prior_g", p.prior_g}, {"after_g", p.after_g}};
        out.push_back(std::move(e));
      }
    }
    if (!theft.pending && !theft.latched && std::abs(s.weight_g) <= cfg_.tare_tolerance_g && n >= 2) {
      double prior = S[n - 2].weight_g;
      Instant prior_t = S[n - 2].t;
      for (std::size_t m = 2; m <= 3 && m < n; ++m) {
        if (S[n - 1 - m].weight_g >= prior) {
          prior = S[n - 1 - m].weight_g;
          prior_t = S[n - 1 - m].t;
        }
      }
      if (prior >= cfg_.theft_min_prior_g)
        theft.pending = TheftState::Pending{s.t, prior, prior_t, s.weight_g, 2};
    }

    // Absconding: a mid-sized drop that keeps mass on the scale, followed by
    // the brood temperature giving up.
    auto& ab = st_.abscond;
    bool absconded = false;
    const auto window = minutes{cfg_.abscond_window_min};
    double ref = s.weight_g;
    Instant ref_t = s.t;
    for (std::size_t i = n - 1; i-- > 0;) {
      if (s.t - S[i].t > window) break;
      if (S[i].weight_g > ref) {  // latest maximum: where the drop starts
        ref = S[i].weight_g;
        ref_t = S[i].t;
      }
    }
    const double drop = ref - s.weight_g;
    if (ab.latched && drop < cfg_.abscond_drop_g.low) ab.latched = false;
    if (collapse) {
      ab.armed.reset();
      ab.latched = true;
    } else {
      if (!ab.armed && !ab.latched && s.t - *st_.first_sample_t >= window &&
          cfg_.abscond_drop_g.contains(drop) && s.weight_g > cfg_.tare_tolerance_g)
        ab.armed = AbscondState::Armed{s.t, ref, ref_t, std::nullopt};
      if (ab.armed) {
        auto& a = *ab.armed;
        if (s.t - a.at > minutes{cfg_.abscond_horizon_min}) {
          ab.armed.reset();
          ab.latched = true;
        } else {
          bool converged = false;
          if (cfg_.ambient_temp_c) {
            converged = std::abs(s.temp_c - *cfg_.ambient_temp_c) <= cfg_.abscond_ambient_tol_c;
          } else if (!cfg_.temp_band.contains(s.temp_c)) {
            if (!a.out_since) a.out_since = s.t;
            converged = s.t - *a.out_since >= minutes{cfg_.abscond_exit_min};
          } else {
            a.out_since.reset();
          }
          if (converged) {
            auto e = make_event(EventKind::Absconding, a.ref_t, s.t, now);
            e.evidence = {{"drop_g", a.ref_g - s.weight_g},
                          {"minutes", minutes_between(a.ref_t, s.t)},
                          {"temp_after", s.temp_c}};
            out.push_back(std::move(e));
            ab.armed.reset();
            ab.latched = true;
            absconded = true;
          }
        }
      }
    }

    // Health: short rolling mean outside either band, continuously.
    auto& hs = st_.health;
    const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(cfg_.smoothing_k));
    double sum_t = 0, sum_h = 0;
    for (std::size_t i = n - k; i < n; ++i) {
      sum_t += S[i].temp_c;
      sum_h += S[i].humidity_pct;
    }
    const double mean_t = sum_t / static_cast<double>(k);
    const double mean_h = sum_h / static_cast<double>(k);
    const bool out_of_band = !cfg_.temp_band.contains(mean_t) || !cfg_.humidity_band.contains(mean_h);
    const bool superseded = collapse || absconded;
    if (superseded) {
      hs.fired = true;
      hs.in_since.reset();
    }
    if (out_of_band) {
      if (!hs.out_since) {
        hs.out_since = s.t;
        hs.run_temp_sum = hs.run_hum_sum = 0;
        hs.run_count = 0;
      }
      hs.run_temp_sum += s.temp_c;
      hs.run_hum_sum += s.humidity_pct;
      ++hs.run_count;
      hs.in_since.reset();
    } else {
      hs.out_since.reset();
      hs.run_count = 0;
      if (!hs.in_since) hs.in_since = s.t;
    }
    if (hs.fired && !superseded && !out_of_band && s.t - *hs.in_since >= minutes{cfg_.health_rearm_min})
      hs.fired = false;
    if (!hs.fired && out_of_band && !ab.armed &&
        s.t - *hs.out_since >= minutes{cfg_.health_sustain_min}) {
      hs.fired = true;
      const double c = static_cast<double>(hs.run_count);
      auto e = make_event(EventKind::HealthAnomaly, *hs.out_since, s.t, now);
      e.evidence = {{"mean_temp", hs.run_temp_sum / c},
                    {"mean_hum", hs.run_hum_sum / c},
                    {"minutes_out", minutes_between(*hs.out_since, s.t)}};
      out.push_back(std::move(e));
    }

    // Supplement: depletion forecast since the last refill.
    auto& rf = st_.refill;
    if (!rf.since) rf.since = s.t;
    if (n >= 2 && s.syrup_ml - S[n - 2].syrup_ml >= cfg_.refill_jump_ml) {
      rf.fired = false;
      rf.since = s.t;
    }
    rf.forecast.reset();
    if (s.t - *rf.since >= std::chrono::hours{cfg_.refill_min_history_h}) {
      const Instant from = std::max(*rf.since, s.t - std::chrono::hours{cfg_.refill_window_h});
      std::size_t first = n - 1;
      while (first > 0 && S[first - 1].t >= from) --first;
      syrup_.clear();
      for (std::size_t i = first; i < n; ++i) syrup_.push_back({S[i].t, S[i].syrup_ml});
      auto f = predict_refill(syrup_);
      if (f) {
        rf.forecast = *f;
        if (!rf.fired && refill_due(*f, cfg_)) {
          rf.fired = true;
          auto e = make_event(EventKind::RefillDue, S[first].t, s.t, now);
          e.evidence = {{"current_ml", f->current_ml},
                        {"eta_hours", f->eta_hours_to_empty.value_or(-1)}};
          out.push_back(std::move(e));
        }
      }
    }

    // Daily baselines feed the swarm and honey-flow rules.
    auto& bs = st_.baseline;
    if (bs.pending_date && s.t >= baseline_end(*bs.pending_date)) finalize_baseline(now, out);
    const auto date = local_date(s.t - cfg_.baseline_from, cfg_.utc_offset);
    const Instant mid = local_midnight(date, cfg_.utc_offset);
    if (s.t >= mid + cfg_.baseline_from && s.t < mid + cfg_.baseline_to) {
      if (!bs.pending_date) bs.pending_date = date;
      if (bs.pending_values.size() < cfg_.buffer_capacity) bs.pending_values.push_back(s.weight_g);
    }
  }

  Instant baseline_end(std::chrono::year_month_day d) const {
    return local_midnight(d, cfg_.utc_offset) + cfg_.baseline_to;
  }

  void finalize_baseline(Instant now, std::vector<HiveEvent>& out) {
    auto& bs = st_.baseline;
    const auto date = *bs.pending_date;
    auto values = std::move(bs.pending_values);
    bs.pending_values.clear();
    bs.pending_date.reset();
    if (values.size() < 3) return;
    bs.history.push_back({date, median_of(std::move(values))});
    const auto keep = static_cast<std::size_t>(cfg_.swarm_days + cfg_.flow_fit_baselines + 2);
    if (bs.history.size() > keep)
      bs.history.erase(bs.history.begin(), bs.history.end() - static_cast<std::ptrdiff_t>(keep));
    const Instant mid = local_midnight(date, cfg_.utc_offset);

    if (auto gain = detect_swarm_risk(bs.history, cfg_)) {
      const std::chrono::sys_days today{date};
      if (!bs.last_swarm ||
          today - std::chrono::sys_days{*bs.last_swarm} >= std::chrono::days{cfg_.swarm_cooldown_days}) {
        bs.last_swarm = date;
        auto e = make_event(EventKind::SwarmRisk, mid - std::chrono::days{cfg_.swarm_days}, mid, now);
        e.evidence = {{"gain_g", *gain}, {"days", static_cast<double>(cfg_.swarm_days)}};
        out.push_back(std::move(e));
      }
    }

    auto est = estimate_honey_flow(bs.history, cfg_,
                                   bs.flow_class != FlowClass::NoFlow ? bs.flow_start_g : std::nullopt);
    if (!est) return;
    const auto cls = est->classification;
    if (cls == FlowClass::NoFlow) bs.flow_start_g.reset();
    else if (bs.flow_class == FlowClass::NoFlow) bs.flow_start_g = est->flow_start_g;
    if (cls != bs.flow_class) {
      const auto n = std::min<std::size_t>(bs.history.size(), static_cast<std::size_t>(cfg_.flow_fit_baselines));
      const auto first = bs.history[bs.history.size() - n].date;
      auto e = make_event(EventKind::HoneyFlow, local_midnight(first, cfg_.utc_offset), mid, now);
      e.evidence = {{"slope_g_per_day", est->slope_g_per_day},
                    {"classification", static_cast<double>(static_cast<int>(cls))},
                    {"accumulated_g", est->accumulated_g},
                    {"eta_days", est->eta_days_to_full.value_or(-1)}};
      out.push_back(std::move(e));
    }
    bs.flow_class = cls;
    bs.estimate = *est;
  }

  void prune(Instant now) {
    using std::chrono::minutes;
    const auto horizon = std::max(minutes{cfg_.abscond_window_min}, minutes{cfg_.refill_window_h * 60});
    const std::size_t keep_min = static_cast<std::size_t>(cfg_.smoothing_k) + 4;
    auto& S = st_.samples;
    while (S.size() > keep_min && now - S.front().t > horizon) S.pop_front();
    while (S.size() > cfg_.buffer_capacity) S.pop_front();
  }

  HiveConfig cfg_;
  EngineState st_;
  std::vector<double> window_;
  std::vector<SyrupPoint> syrup_;
};

// ---------------------------------------------------------------------------
// Snapshot format (version 1): a JSON object
//   {"version":1, "hive_id":..., "state":{...}}
// Instants are epoch milliseconds, dates "YYYY-MM-DD", absent optionals null.

namespace snapshot_detail {

using nlohmann::json;

inline json opt_instant(const std::optional<Instant>& t) {
  return t ? json(to_epoch_ms(*t)) : json(nullptr);
}
inline std::optional<Instant> get_instant(const json& j) {
  if (j.is_null()) return std::nullopt;
  return from_epoch_ms(j.get<std::int64_t>());
}
inline json opt_date(const std::optional<std::chrono::year_month_day>& d) {
  return d ? json(format_date(*d)) : json(nullptr);
}
inline std::optional<std::chrono::year_month_day> get_date(const json& j) {
  if (j.is_null()) return std::nullopt;
  auto d = parse_date(j.get<std::string>());
  if (!d) throw std::runtime_error("bad date in snapshot");
  return d;
}
inline json opt_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<double> get_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline json reading_to_json(const SensorReading& r) {
  return {to_epoch_ms(r.timestamp), r.temp_c, r.humidity_pct, r.syrup_ml, r.weight_g, r.light};
}
inline SensorReading reading_from(const json& j, const std::string& hive) {
  SensorReading r;
  r.hive_id = hive;
  r.timestamp = from_epoch_ms(j.at(0).get<std::int64_t>());
  r.temp_c = j.at(1).get<double>();
  r.humidity_pct = j.at(2).get<double>();
  r.syrup_ml = j.at(3).get<double>();
  r.weight_g = j.at(4).get<double>();
  r.light = j.at(5).get<bool>();
  return r;
}

}  // namespace snapshot_detail

inline nlohmann::json HiveEngine::snapshot() const {
  using namespace snapshot_detail;
  json s;
  s["readings_seen"] = st_.readings_seen;
  s["out_of_order"] = st_.out_of_order;
  s["last_reading_t"] = opt_instant(st_.last_reading_t);
  s["first_sample_t"] = opt_instant(st_.first_sample_t);
  s["raw"] = json::array();
  for (const auto& r : st_.raw) s["raw"].push_back(reading_to_json(r));
  s["samples"] = json::array();
  for (const auto& x : st_.samples)
    s["samples"].push_back({to_epoch_ms(x.t), x.weight_g, x.temp_c, x.humidity_pct, x.syrup_ml});
  s["fall"] = {{"below_run", st_.fall.below_run}, {"fired", st_.fall.fired}};
  json theft = {{"latched", st_.theft.latched}, {"pending", nullptr}};
  if (const auto& p = st_.theft.pending)
    theft["pending"] = {{"at", to_epoch_ms(p->at)},        {"prior_g", p->prior_g},
                        {"prior_t", to_epoch_ms(p->prior_t)}, {"after_g", p->after_g},
                        {"left", p->confirmations_left}};
  s["theft"] = theft;
  json ab = {{"latched", st_.abscond.latched}, {"armed", nullptr}};
  if (const auto& a = st_.abscond.armed)
    ab["armed"] = {{"at", to_epoch_ms(a->at)},
                   {"ref_g", a->ref_g},
                   {"ref_t", to_epoch_ms(a->ref_t)},
                   {"out_since", opt_instant(a->out_since)}};
  s["abscond"] = ab;
  const auto& h = st_.health;
  s["health"] = {{"fired", h.fired},
                 {"out_since", opt_instant(h.out_since)},
                 {"in_since", opt_instant(h.in_since)},
                 {"run_temp_sum", h.run_temp_sum},
                 {"run_hum_sum", h.run_hum_sum},
                 {"run_count", h.run_count}};
  json rf = {{"fired", st_.refill.fired}, {"since", opt_instant(st_.refill.since)}, {"forecast", nullptr}};
  if (const auto& f = st_.refill.forecast)
    rf["forecast"] = {{"current_ml", f->current_ml},
                      {"slope_ml_per_hour", f->slope_ml_per_hour},
                      {"eta_hours", opt_double(f->eta_hours_to_empty)}};
  s["refill"] = rf;
  const auto& b = st_.baseline;
  json bl = {{"pending_date", opt_date(b.pending_date)},
             {"pending_values", b.pending_values},
             {"last_swarm", opt_date(b.last_swarm)},
             {"flow_class", static_cast<int>(b.flow_class)},
             {"flow_start_g", opt_double(b.flow_start_g)},
             {"history", json::array()},
             {"estimate", nullptr}};
  for (const auto& p : b.history) bl["history"].push_back({format_date(p.date), p.weight_g});
  if (const auto& e = b.estimate)
    bl["estimate"] = {{"slope", e->slope_g_per_day},
                      {"class", static_cast<int>(e->classification)},
                      {"eta_days", opt_double(e->eta_days_to_full)},
                      {"accumulated_g", e->accumulated_g},
                      {"flow_start_g", e->flow_start_g}};
  s["baseline"] = bl;
  return {{"version", kSnapshotVersion}, {"hive_id", cfg_.hive_id}, {"state", s}};
}

inline Result<HiveEngine, std::string> HiveEngine::restore(const nlohmann::json& j, HiveConfig cfg) {
  using namespace snapshot_detail;
  try {
    if (j.at("version").get<int>() != kSnapshotVersion) return std::string("unsupported snapshot version");
    if (j.at("hive_id").get<std::string>() != cfg.hive_id) return std::string("snapshot is for another hive");
    HiveEngine eng(std::move(cfg));
    const auto& s = j.at("state");
    auto& st = eng.st_;
    st.readings_seen = s.at("readings_seen").get<std::uint64_t>();
    st.out_of_order = s.at("out_of_order").get<std::uint64_t>();
    st.last_reading_t = get_instant(s.at("last_reading_t"));
    st.first_sample_t = get_instant(s.at("first_sample_t"));
    for (const auto& r : s.at("raw")) st.raw.push_back(reading_from(r, eng.cfg_.hive_id));
    for (const auto& x : s.at("samples"))
      st.samples.push_back({from_epoch_ms(x.at(0).get<std::int64_t>()), x.at(1).get<double>(),
                            x.at(2).get<double>(), x.at(3).get<double>(), x.at(4).get<double>()});
    st.fall.below_run = s.at("fall").at("below_run").get<int>();
    st.fall.fired = s.at("fall").at("fired").get<bool>();
    st.theft.latched = s.at("theft").at("latched").get<bool>();
    if (const auto& p = s.at("theft").at("pending"); !p.is_null())
      st.theft.pending = TheftState::Pending{from_epoch_ms(p.at("at").get<std::int64_t>()),
                                             p.at("prior_g").get<double>(),
                                             from_epoch_ms(p.at("prior_t").get<std::int64_t>()),
                                             p.at("after_g").get<double>(), p.at("left").get<int>()};
    st.abscond.latched = s.at("abscond").at("latched").get<bool>();
    if (const auto& a = s.at("abscond").at("armed"); !a.is_null())
      st.abscond.armed = AbscondState::Armed{from_epoch_ms(a.at("at").get<std::int64_t>()),
                                             a.at("ref_g").get<double>(),
                                             from_epoch_ms(a.at("ref_t").get<std::int64_t>()),
                                             get_instant(a.at("out_since"))};
    const auto& h = s.at("health");
    st.health.fired = h.at("fired").get<bool>();
    st.health.out_since = get_instant(h.at("out_since"));
    st.health.in_since = get_instant(h.at("in_since"));
    st.health.run_temp_sum = h.at("run_temp_sum").get<double>();
    st.health.run_hum_sum = h.at("run_hum_sum").get<double>();
    st.health.run_count = h.at("run_count").get<std::size_t>();
    const auto& rf = s.at("refill");
    st.refill.fired = rf.at("fired").get<bool>();
    st.refill.since = get_instant(rf.at("since"));
    if (const auto& f = rf.at("forecast"); !f.is_null())
      st.refill.forecast = RefillForecast{f.at("current_ml").get<double>(),
                                          f.at("slope_ml_per_hour").get<double>(),
                                          get_double(f.at("eta_hours"))};
    const auto& b = s.at("baseline");
    st.baseline.pending_date = get_date(b.at("pending_date"));
    st.baseline.pending_values = b.at("pending_values").get<std::vector<double>>();
    st.baseline.last_swarm = get_date(b.at("last_swarm"));
    st.baseline.flow_class = static_cast<FlowClass>(b.at("flow_class").get<int>());
    st.baseline.flow_start_g = get_double(b.at("flow_start_g"));
    for (const auto& p : b.at("history"))
      st.baseline.history.push_back({*get_date(p.at(0)), p.at(1).get<double>()});
    if (const auto& e = b.at("estimate"); !e.is_null())
      st.baseline.estimate = HoneyFlowEstimate{e.at("slope").get<double>(),
                                               static_cast<FlowClass>(e.at("class").get<int>()),
                                               get_double(e.at("eta_days")),
                                               e.at("accumulated_g").get<double>(),
                                               e.at("flow_start_g").get<double>()};
    return eng;
  } catch (const std::exception& ex) {
    return std::string("malformed snapshot: ") + ex.what();
  }
}

}  // namespace hivelink
