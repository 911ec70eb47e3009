#pragma once

#include <charconv>
#include <cstdio>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "hivelink/model.hpp"
#include "hivelink/result.hpp"

namespace hivelink {

/// Untyped reading as it arrives on the wire.
struct RawReading {
  std::string hive_id;
  Instant timestamp{};
  std::optional<std::string> temp;
  std::optional<std::string> hum;
  std::optional<std::string> syrup;
  std::optional<std::string> weight;
  std::optional<std::string> light;
};

struct ValidationError {
  enum class Code { MissingField, OutOfRange, BadNumber, BadTimestamp };

  Code code = Code::MissingField;
  std::string field;
  double value = 0;
  Band bounds{};

  std::string message() const {
    switch (code) {
      case Code::MissingField: return "missing field: " + field;
      case Code::BadNumber: return "malformed value for field: " + field;
      case Code::BadTimestamp: return "bad timestamp";
      case Code::OutOfRange: {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s out of range: %g not in [%g, %g]", field.c_str(), value,
                      bounds.low, bounds.high);
        return buf;
      }
    }
    return "invalid reading";
  }
};

/// Strips one layer of surrounding single or double quotes, as the
/// spreadsheet ingestion script did for every parameter.
inline std::string_view strip_quotes(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    s = s.substr(1, s.size() - 2);
  return s;
}

/// Strict decimal parse: whole string, finite, optional leading '+'.
inline std::optional<double> parse_number(std::string_view s) {
  s = strip_quotes(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::general);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_light(std::string_view s) {
  s = strip_quotes(s);
  if (s == "1" || s == "true" || s == "TRUE" || s == "True" || s == "on" || s == "HIGH") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "False" || s == "off" || s == "LOW") return false;
  return std::nullopt;
}

inline Result<SensorReading, ValidationError> validate_reading(const RawReading& raw,
                                                               const HiveConfig& cfg) {
  using Code = ValidationError::Code;
  SensorReading out;
  out.hive_id = raw.hive_id;

  struct Field {
    const char* name;
    const std::optional<std::string>* text;
    Band range;
    double* dest;
  };
  const Field fields[] = {
      {"temp_c", &raw.temp, kTempRange, &out.temp_c},
      {"humidity_pct", &raw.hum, kHumidityRange, &out.humidity_pct},
      {"syrup_ml", &raw.syrup, kSyrupRange, &out.syrup_ml},
      {"weight_g", &raw.weight, kWeightRange, &out.weight_g},
  };
  for (const auto& f : fields) {
    if (!f.text->has_value()) return ValidationError{Code::MissingField, f.name};
    const auto v = parse_number(**f.text);
    if (!v) return ValidationError{Code::BadNumber, f.name};
    if (!f.range.contains(*v)) return ValidationError{Code::OutOfRange, f.name, *v, f.range};
    *f.dest = *v;
  }
  if (!raw.light) return ValidationError{Code::MissingField, "light"};
  const auto light = parse_light(*raw.light);
  if (!light) return ValidationError{Code::BadNumber, "light"};
  out.light = *light;

  if (raw.timestamp < cfg.registered_at || raw.timestamp == Instant::min() ||
      raw.timestamp == Instant::max())
    return ValidationError{Code::BadTimestamp, "timestamp"};
  out.timestamp = raw.timestamp;
  return out;
}

}  // namespace hivelink
