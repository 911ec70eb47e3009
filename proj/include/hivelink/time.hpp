#pragma once

#include <charconv>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace hivelink {

using Millis = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Millis>;

/// Fixed offset of a display/local zone from UTC.
using UtcOffset = std::chrono::minutes;

/// Minutes after local midnight, [0, 1440).
using TimeOfDay = std::chrono::minutes;

inline constexpr std::chrono::minutes kMinutesPerDay{1440};

inline std::int64_t to_epoch_ms(Instant t) { return t.time_since_epoch().count(); }
inline Instant from_epoch_ms(std::int64_t ms) { return Instant{Millis{ms}}; }

inline double hours_between(Instant a, Instant b) {
  return std::chrono::duration<double, std::ratio<3600>>(b - a).count();
}
inline double minutes_between(Instant a, Instant b) {
  return std::chrono::duration<double, std::ratio<60>>(b - a).count();
}

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace detail

/// Parses "+05:30", "-0800", "Z", "UTC" or the alias "Asia/Kolkata".
inline std::optional<UtcOffset> parse_utc_offset(std::string_view s) {
  if (s == "Z" || s == "UTC" || s == "Etc/UTC" || s == "GMT") return UtcOffset{0};
  if (s == "Asia/Kolkata" || s == "Asia/Calcutta" || s == "IST") return UtcOffset{330};
  if (s.size() < 3 || (s[0] != '+' && s[0] != '-')) return std::nullopt;
  const int sign = s[0] == '-' ? -1 : 1;
  std::string_view rest = s.substr(1);
  int hh = 0, mm = 0;
  if (rest.size() == 5 && rest[2] == ':') {
    if (!detail::parse_int(rest.substr(0, 2), hh) || !detail::parse_int(rest.substr(3, 2), mm))
      return std::nullopt;
  } else if (rest.size() == 4) {
    if (!detail::parse_int(rest.substr(0, 2), hh) || !detail::parse_int(rest.substr(2, 2), mm))
      return std::nullopt;
  } else if (rest.size() == 2) {
    if (!detail::parse_int(rest, hh)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (hh > 14 || mm > 59) return std::nullopt;
  return UtcOffset{sign * (hh * 60 + mm)};
}

inline std::string format_utc_offset(UtcOffset off) {
  const auto total = off.count();
  const char sign = total < 0 ? '-' : '+';
  const auto a = total < 0 ? -total : total;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%c%02d:%02d", sign, static_cast<int>(a / 60),
                static_cast<int>(a % 60));
  return buf;
}

/// Parses "HH:MM" into minutes after midnight.
inline std::optional<TimeOfDay> parse_time_of_day(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  int hh = 0, mm = 0;
  if (!detail::parse_int(s.substr(0, colon), hh) || !detail::parse_int(s.substr(colon + 1), mm))
    return std::nullopt;
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) return std::nullopt;
  return TimeOfDay{hh * 60 + mm};
}

inline std::string format_time_of_day(TimeOfDay t) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(t.count() / 60),
                static_cast<int>(t.count() % 60));
  return buf;
}

inline std::chrono::local_time<Millis> to_local(Instant t, UtcOffset off) {
  return std::chrono::local_time<Millis>{t.time_since_epoch() + off};
}

inline Instant from_local(std::chrono::local_time<Millis> t, UtcOffset off) {
  return Instant{t.time_since_epoch() - off};
}

inline std::chrono::year_month_day local_date(Instant t, UtcOffset off) {
  return std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(to_local(t, off))};
}

inline TimeOfDay local_time_of_day(Instant t, UtcOffset off) {
  const auto lt = to_local(t, off);
  return std::chrono::floor<std::chrono::minutes>(lt - std::chrono::floor<std::chrono::days>(lt));
}

/// UTC instant of 00:00 local on the given date.
inline Instant local_midnight(std::chrono::year_month_day date, UtcOffset off) {
  const std::chrono::local_days ld{date};
  return from_local(std::chrono::local_time<Millis>{ld.time_since_epoch()}, off);
}

inline std::string format_date(std::chrono::year_month_day d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

inline std::optional<std::chrono::year_month_day> parse_date(std::string_view s) {
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
      !detail::parse_int(s.substr(8, 2), d))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

/// RFC 3339 in UTC with millisecond precision: 2023-01-18T07:06:00.000Z
inline std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()),
                static_cast<int>(hms.subseconds().count()));
  return buf;
}

/// Accepts epoch milliseconds ("1674025560000") or RFC 3339
/// ("2023-01-18T12:36:00+05:30", fractional seconds optional, "Z" allowed).
inline std::optional<Instant> parse_instant(std::string_view s) {
  using namespace std::chrono;
  if (detail::all_digits(s) || (s.size() > 1 && s[0] == '-' && detail::all_digits(s.substr(1)))) {
    std::int64_t ms = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), ms);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return from_epoch_ms(ms);
  }
  if (s.size() < 19) return std::nullopt;
  const auto date = parse_date(s.substr(0, 10));
  if (!date || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  int hh = 0, mi = 0, ss = 0;
  if (s[13] != ':' || s[16] != ':' || !detail::parse_int(s.substr(11, 2), hh) ||
      !detail::parse_int(s.substr(14, 2), mi) || !detail::parse_int(s.substr(17, 2), ss))
    return std::nullopt;
  if (hh > 23 || mi > 59 || ss > 60) return std::nullopt;
  std::string_view rest = s.substr(19);
  int frac_ms = 0;
  if (!rest.empty() && rest[0] == '.') {
    std::size_t n = 1;
    while (n < rest.size() && rest[n] >= '0' && rest[n] <= '9') ++n;
    if (n == 1) return std::nullopt;
    std::string digits{rest.substr(1, n - 1)};
    digits.resize(3, '0');
    detail::parse_int(std::string_view{digits}.substr(0, 3), frac_ms);
    rest = rest.substr(n);
  }
  UtcOffset off{0};
  if (!rest.empty()) {
    auto parsed = parse_utc_offset(rest);
    if (!parsed) return std::nullopt;
    off = *parsed;
  }
  const local_time<Millis> lt{local_days{*date}.time_since_epoch() + hours{hh} + minutes{mi} +
                              seconds{ss} + Millis{frac_ms}};
  return from_local(lt, off);
}

/// Durations like "90s", "30m", "6h", "14d", "250ms"; a bare number is seconds.
inline std::optional<Millis> parse_duration(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t n = 0;
  while (n < s.size() && ((s[n] >= '0' && s[n] <= '9') || s[n] == '.')) ++n;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + n, v);
  if (ec != std::errc{} || p != s.data() + n) return std::nullopt;
  const std::string_view unit = s.substr(n);
  double scale = 0;
  if (unit.empty() || unit == "s") scale = 1000;
  else if (unit == "ms") scale = 1;
  else if (unit == "m" || unit == "min") scale = 60'000;
  else if (unit == "h") scale = 3'600'000;
  else if (unit == "d") scale = 86'400'000;
  else return std::nullopt;
  return Millis{static_cast<std::int64_t>(v * scale + 0.5)};
}

/// Injectable time source; production uses the system clock.
class Clock {
public:
  virtual ~Clock() = default;
  virtual Instant now() = 0;
};

class SystemClock final : public Clock {
public:
  Instant now() override {
    return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
  }
};

/// Clock that only moves when told to. Thread-safe.
class ManualClock final : public Clock {
public:
  explicit ManualClock(Instant start = {}) : ms_(to_epoch_ms(start)) {}
  Instant now() override { return from_epoch_ms(ms_.load()); }
  void set(Instant t) { ms_.store(to_epoch_ms(t)); }
  void advance(Millis d) { ms_.fetch_add(d.count()); }

private:
  std::atomic<std::int64_t> ms_;
};

}  // namespace hivelink
