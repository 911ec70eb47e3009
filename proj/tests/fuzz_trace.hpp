#pragma once

// Seeded random traces for comparing the engine with the whole-trace oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "hivelink/model.hpp"

namespace fuzz {

using namespace hivelink;

// Piecewise regimes that exercise every rule: steady colonies, slow drops,
// removal, inversion, spikes, hot and cold spells, feedings, with uneven
// spacing and repeated timestamps.
inline std::vector<SensorReading> trace(std::mt19937_64& rng, bool multi_day, Instant t0) {
  std::uniform_real_distribution<double> u(0, 1);
  auto pick = [&](double a, double b) { return a + (b - a) * u(rng); };
  std::vector<SensorReading> out;
  Instant t = t0 + std::chrono::minutes{static_cast<int>(pick(0, 1440))};
  double w = pick(0, 12000), temp = pick(29, 33), hum = pick(48, 62), syrup = pick(0, 600);
  const int segments = 3 + static_cast<int>(pick(0, 8));
  const double step_min = multi_day ? pick(20, 60) : pick(0.5, 8);
  for (int s = 0; s < segments; ++s) {
    const int len = 5 + static_cast<int>(pick(0, multi_day ? 300 : 120));
    const double target_w = [&] {
      const double r = u(rng);
      if (r < 0.2) return w;
      if (r < 0.35) return w - pick(700, 2600);
      if (r < 0.5) return pick(-150, 150);
      if (r < 0.6) return pick(-2500, -200);
      if (r < 0.85) return w + pick(-300, 3000);
      return pick(0, 12000);
    }();
    const int ramp = static_cast<int>(pick(1, len));
    const double target_temp = u(rng) < 0.5 ? pick(29.5, 32.5) : pick(20, 38);
    const double target_hum = u(rng) < 0.6 ? pick(49, 61) : pick(30, 90);
    const double syrup_rate = u(rng) < 0.3 ? 0 : pick(0, 15);
    if (u(rng) < 0.3) syrup = pick(100, 600);
    const double w0 = w, temp0 = temp, hum0 = hum;
    const double noise = u(rng) < 0.5 ? 0 : pick(0, 30);
    for (int i = 0; i < len; ++i) {
      const double f = std::min(1.0, (i + 1.0) / ramp);
      w = w0 + (target_w - w0) * f;
      temp = temp0 + (target_temp - temp0) * f;
      hum = hum0 + (target_hum - hum0) * f;
      syrup = std::max(0.0, syrup - syrup_rate * pick(0, 1));
      double wn = w + (noise > 0 ? pick(-noise, noise) : 0);
      if (u(rng) < 0.01) wn = pick(-3000, 15000);
      if (out.size() == 2000) return out;
      out.push_back({"H1", t, std::round(temp * 10) / 10, std::round(hum), std::round(syrup), wn, true});
      if (u(rng) > 0.05) t += std::chrono::milliseconds{static_cast<std::int64_t>(step_min * pick(0.5, 1.5) * 60000)};
    }
  }
  return out;
}

/// Every fourth seed is a multi-day trace; the config varies with the seed too.
inline bool multi_day(unsigned seed) { return seed % 4 == 0; }

inline std::vector<SensorReading> trace(unsigned seed, Instant t0) {
  std::mt19937_64 rng(seed);
  return trace(rng, multi_day(seed), t0);
}

inline HiveConfig config_for(unsigned seed) {
  HiveConfig c;
  c.hive_id = "H1";
  c.smoothing_k = std::array{1, 3, 5, 5, 7}[seed % 5];
  if (seed % 3 == 0) c.ambient_temp_c = 25;
  if (seed % 7 == 0) {
    c.baseline_from = std::chrono::minutes{-180};
    c.baseline_to = std::chrono::minutes{120};
  }
  if (multi_day(seed)) c.swarm_gain_g = 800;
  return c;
}

}  // namespace fuzz
