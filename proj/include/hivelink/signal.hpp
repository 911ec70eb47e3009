#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hivelink/result.hpp"

namespace hivelink {

enum class SignalError { EmptyInput, EvenK, TooFewPoints, DegenerateAbscissae };

/// Sliding-window median of width k. Near the ends the window shrinks
/// symmetrically, so output[i] is the median of
/// values[i-h .. i+h] with h = min(k/2, i, n-1-i).
inline Result<std::vector<double>, SignalError> smooth(std::span<const double> values, int k) {
  if (values.empty()) return SignalError::EmptyInput;
  if (k < 1 || k % 2 == 0) return SignalError::EvenK;
  const std::size_t n = values.size();
  const std::size_t half = static_cast<std::size_t>(k / 2);
  std::vector<double> out(n);
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    window.assign(values.begin() + static_cast<std::ptrdiff_t>(i - h),
                  values.begin() + static_cast<std::ptrdiff_t>(i + h + 1));
    auto mid = window.begin() + static_cast<std::ptrdiff_t>(h);
    std::nth_element(window.begin(), mid, window.end());
    out[i] = *mid;
  }
  return out;
}

/// Median of an odd- or even-sized sample (mean of the middle pair).
inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

struct FitPoint {
  double x = 0;
  double y = 0;
};

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double rmse = 0;

  double at(double x) const noexcept { return intercept + slope * x; }
};

/// Ordinary least squares on centered data.
inline Result<LineFit, SignalError> linear_fit(std::span<const FitPoint> pts) {
  if (pts.size() < 2) return SignalError::TooFewPoints;
  const double n = static_cast<double>(pts.size());
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    const double dx = p.x - mx;
    sxx += dx * dx;
    sxy += dx * (p.y - my);
  }
  const double scale = std::max(1.0, std::abs(mx));
  if (sxx <= 1e-18 * scale * scale * n) return SignalError::DegenerateAbscissae;
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0;
  for (const auto& p : pts) {
    const double r = p.y - fit.at(p.x);
    sse += r * r;
  }
  fit.rmse = std::sqrt(sse / n);
  return fit;
}

}  // namespace hivelink
