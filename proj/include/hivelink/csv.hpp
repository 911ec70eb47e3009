#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/time.hpp"
#include "hivelink/validate.hpp"

namespace hivelink {

inline constexpr std::string_view kCsvHeader =
    "Date,Time,Hive Temperature(\xC2\xB0" "C),Hive Humidity(%),Supplement Quantity(mL),Hive Weight(Grams)";

/// Shortest text that round-trips the double: 30 not 30.0, -28.6 stays -28.6.
inline std::string format_number(double v) {
  if (v == 0) v = 0;  // drop negative zero
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// "MM/DD/YYYY" and "h:mm AM" in the given display offset.
inline std::string format_csv_date(Instant t, UtcOffset off) {
  const auto d = local_date(t, off);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u/%02u/%04d", static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()), static_cast<int>(d.year()));
  return buf;
}

inline std::string format_csv_time(Instant t, UtcOffset off) {
  const auto tod = local_time_of_day(t, off).count();
  const int h24 = static_cast<int>(tod / 60);
  const int mm = static_cast<int>(tod % 60);
  const int h12 = h24 % 12 == 0 ? 12 : h24 % 12;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%d:%02d %s", h12, mm, h24 < 12 ? "AM" : "PM");
  return buf;
}

inline std::string format_csv_row(const SensorReading& r, UtcOffset off) {
  std::string line = format_csv_date(r.timestamp, off);
  line += ',';
  line += format_csv_time(r.timestamp, off);
  for (double v : {r.temp_c, r.humidity_pct, r.syrup_ml, r.weight_g}) {
    line += ',';
    line += format_number(v);
  }
  return line;
}

template <typename Range>
std::string format_csv(const Range& readings, UtcOffset off) {
  std::string out{kCsvHeader};
  out += '\n';
  for (const SensorReading& r : readings) {
    out += format_csv_row(r, off);
    out += '\n';
  }
  return out;
}

struct CsvError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

struct CsvImportOptions {
  UtcOffset offset{330};
  // Light is not a CSV column; imported rows get daylight inside this window.
  TimeOfDay daylight_from{6 * 60};
  TimeOfDay daylight_to{19 * 60};
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto c = line.find(',', start);
    if (c == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, c - start));
    start = c + 1;
  }
}

inline std::string normalize_header(std::string_view h) {
  std::string out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(h[i]);
    if (c == ' ' || c == '\t' || c == '\r' || c == '"') continue;
    if (c >= 0x80) continue;  // degree sign in whatever encoding
    out += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  return out;
}

/// "h:mm AM"; hour 0 with PM is read as 12 (a spreadsheet locale quirk).
inline std::optional<TimeOfDay> parse_csv_time(std::string_view s) {
  s = strip_quotes(s);
  const auto sp = s.find(' ');
  if (sp == std::string_view::npos) return std::nullopt;
  const std::string_view hm = s.substr(0, sp);
  const std::string_view ampm = s.substr(sp + 1);
  const auto colon = hm.find(':');
  int h = 0, m = 0;
  if (colon == std::string_view::npos || !parse_int(hm.substr(0, colon), h) ||
      hm.size() - colon - 1 != 2 || !parse_int(hm.substr(colon + 1), m))
    return std::nullopt;
  if (h < 0 || h > 12 || m < 0 || m > 59) return std::nullopt;
  int h24 = 0;
  if (ampm == "AM" || ampm == "am") h24 = h == 12 ? 0 : h;
  else if (ampm == "PM" || ampm == "pm") h24 = h == 12 || h == 0 ? 12 : h + 12;
  else return std::nullopt;
  return TimeOfDay{h24 * 60 + m};
}

inline std::optional<std::chrono::year_month_day> parse_csv_date(std::string_view s) {
  s = strip_quotes(s);
  const auto a = s.find('/');
  const auto b = s.find('/', a == std::string_view::npos ? a : a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos) return std::nullopt;
  int mo = 0, d = 0, y = 0;
  if (!parse_int(s.substr(0, a), mo) || !parse_int(s.substr(a + 1, b - a - 1), d) ||
      !parse_int(s.substr(b + 1), y))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

}  // namespace detail

/// Parses a hive log export. Rows keep minute resolution from the Time
/// column; readings within one minute share a timestamp.
inline Result<std::vector<SensorReading>, CsvError> parse_csv(std::string_view text,
                                                              const std::string& hive_id,
                                                              const CsvImportOptions& opt = {}) {
  std::vector<SensorReading> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (detail::normalize_header(line) != detail::normalize_header(kCsvHeader))
        return CsvError{line_no, "unexpected header"};
      header_seen = true;
      continue;
    }
    const auto cols = detail::split_commas(line);
    if (cols.size() != 6) return CsvError{line_no, "expected 6 columns"};
    const auto date = detail::parse_csv_date(cols[0]);
    const auto tod = detail::parse_csv_time(cols[1]);
    if (!date || !tod) return CsvError{line_no, "bad date or time"};
    SensorReading r;
    r.hive_id = hive_id;
    r.timestamp = local_midnight(*date, opt.offset) + *tod;
    double* dest[] = {&r.temp_c, &r.humidity_pct, &r.syrup_ml, &r.weight_g};
    for (int i = 0; i < 4; ++i) {
      const auto v = parse_number(cols[static_cast<std::size_t>(i) + 2]);
      if (!v) return CsvError{line_no, "bad number in column " + std::to_string(i + 3)};
      *dest[i] = *v;
    }
    r.light = *tod >= opt.daylight_from && *tod < opt.daylight_to;
    out.push_back(std::move(r));
  }
  if (!header_seen) return CsvError{1, "missing header"};
  return out;
}

}  // namespace hivelink
