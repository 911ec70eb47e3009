#pragma once

#include <fcntl.h>
#include <charconv>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "hivelink/csv.hpp"
#include "hivelink/model.hpp"
#include "hivelink/result.hpp"
#include "hivelink/signal.hpp"

namespace hivelink {

struct StoredReading {
  std::uint64_t row_index = 0;  // 1-based, gapless
  SensorReading reading;
};

struct StoreError {
  enum class Code { UnknownHive, StorageFull, CorruptLog, Io, OutOfOrder, InvalidReading };
  Code code = Code::Io;
  std::string message;
};

struct DailyBaseline {
  std::string hive_id;
  std::chrono::year_month_day local_date{};
  double weight_g = 0;
  std::size_t sample_count = 0;
};

enum class Durability {
  Flush,  // write(2) before returning: survives process death
  Fsync,  // additionally fsync(2): survives power loss
};

/// Record line: "v1\t<row>\t<epoch_ms>\t<temp>\t<hum>\t<syrup>\t<weight>\t<light>\t<crc32>\n".
/// The CRC covers every byte before the final tab.
namespace logfmt {

inline std::string crc_hex(std::string_view body) {
  const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                           static_cast<uInt>(body.size()));
  char buf[12];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

inline std::string encode(std::uint64_t row, const SensorReading& r) {
  std::string body = "v1\t" + std::to_string(row) + '\t' + std::to_string(to_epoch_ms(r.timestamp));
  for (double v : {r.temp_c, r.humidity_pct, r.syrup_ml, r.weight_g}) {
    body += '\t';
    body += format_number(v);
  }
  body += r.light ? "\t1" : "\t0";
  std::string line = body + '\t' + crc_hex(body) + '\n';
  return line;
}

inline std::optional<StoredReading> decode(std::string_view line, const std::string& hive_id) {
  const auto last_tab = line.rfind('\t');
  if (last_tab == std::string_view::npos) return std::nullopt;
  const std::string_view body = line.substr(0, last_tab);
  if (crc_hex(body) != line.substr(last_tab + 1)) return std::nullopt;
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    const auto t = body.find('\t', start);
    f.push_back(body.substr(start, t == std::string_view::npos ? t : t - start));
    if (t == std::string_view::npos) break;
    start = t + 1;
  }
  if (f.size() != 8 || f[0] != "v1") return std::nullopt;
  StoredReading out;
  out.reading.hive_id = hive_id;
  std::int64_t ms = 0;
  if (std::from_chars(f[1].data(), f[1].data() + f[1].size(), out.row_index).ec != std::errc{} ||
      std::from_chars(f[2].data(), f[2].data() + f[2].size(), ms).ec != std::errc{})
    return std::nullopt;
  out.reading.timestamp = from_epoch_ms(ms);
  double* dest[] = {&out.reading.temp_c, &out.reading.humidity_pct, &out.reading.syrup_ml,
                    &out.reading.weight_g};
  for (int i = 0; i < 4; ++i) {
    const auto v = parse_number(f[static_cast<std::size_t>(i) + 3]);
    if (!v) return std::nullopt;
    *dest[i] = *v;
  }
  if (f[7] != "0" && f[7] != "1") return std::nullopt;
  out.reading.light = f[7] == "1";
  return out;
}

}  // namespace logfmt

/// Append-only log for one hive. One writer at a time (append serializes
/// internally); readers see a consistent prefix.
class ReadingLog {
public:
  /// Memory-only log when path is empty.
  static Result<std::unique_ptr<ReadingLog>, StoreError> open(std::string hive_id,
                                                              std::filesystem::path path,
                                                              Durability durability) {
    std::unique_ptr<ReadingLog> log{new ReadingLog(std::move(hive_id), std::move(path), durability)};
    if (auto err = log->load()) return *err;
    return log;
  }

  ReadingLog(const ReadingLog&) = delete;
  ReadingLog& operator=(const ReadingLog&) = delete;
  ~ReadingLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::string& hive_id() const noexcept { return hive_id_; }

  /// Durable (per the configured durability) before returning.
  Result<std::uint64_t, StoreError> append(const SensorReading& r) {
    std::unique_lock lock(mu_);
    if (!rows_.empty() && r.timestamp < rows_.back().reading.timestamp)
      return StoreError{StoreError::Code::OutOfOrder, "timestamp precedes last stored reading"};
    const std::uint64_t row = rows_.size() + 1;
    if (fd_ >= 0) {
      const std::string line = logfmt::encode(row, r);
      std::size_t done = 0;
      while (done < line.size()) {
        const auto n = ::write(fd_, line.data() + done, line.size() - done);
        if (n < 0) {
          if (errno == EINTR) continue;
          const int e = errno;
          if (done > 0 && ::ftruncate(fd_, static_cast<off_t>(bytes_)) != 0) {
            // the torn record is discarded on the next open
          }
          if (e == ENOSPC || e == EDQUOT || e == EFBIG)
            return StoreError{StoreError::Code::StorageFull, std::strerror(e)};
          return StoreError{StoreError::Code::Io, std::strerror(e)};
        }
        done += static_cast<std::size_t>(n);
      }
      if (durability_ == Durability::Fsync && ::fsync(fd_) != 0)
        return StoreError{StoreError::Code::Io, std::strerror(errno)};
      bytes_ += line.size();
    }
    StoredReading s{row, r};
    s.reading.hive_id = hive_id_;
    rows_.push_back(std::move(s));
    return row;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return rows_.size();
  }

  std::optional<StoredReading> latest() const {
    std::shared_lock lock(mu_);
    if (rows_.empty()) return std::nullopt;
    return rows_.back();
  }

  /// Readings with t0 <= timestamp < t1, in log order.
  std::vector<StoredReading> query(Instant t0, Instant t1) const {
    std::shared_lock lock(mu_);
    if (!(t0 < t1)) return {};
    auto [lo, hi] = bounds(t0, t1);
    return {lo, hi};
  }

  /// Rows with row_index > after, in order.
  std::vector<StoredReading> rows_after(std::uint64_t after) const {
    std::shared_lock lock(mu_);
    if (after >= rows_.size()) return {};
    return {rows_.begin() + static_cast<std::ptrdiff_t>(after), rows_.end()};
  }

  /// Median of the median-smoothed weight inside the nighttime reference
  /// window around the local midnight that starts `date`. Smoothing uses
  /// neighbours outside the window exactly as a whole-log smoothing would.
  std::optional<DailyBaseline> daily_baseline(std::chrono::year_month_day date,
                                              const HiveConfig& cfg) const {
    std::shared_lock lock(mu_);
    const Instant mid = local_midnight(date, cfg.utc_offset);
    auto [lo, hi] = bounds(mid + cfg.baseline_from, mid + cfg.baseline_to);
    const auto count = static_cast<std::size_t>(hi - lo);
    if (count < 3) return std::nullopt;
    const auto half = static_cast<std::ptrdiff_t>(cfg.smoothing_k / 2);
    const auto n = static_cast<std::ptrdiff_t>(rows_.size());
    const auto lo_i = lo - rows_.begin();
    const auto hi_i = hi - rows_.begin();
    const auto first = std::max<std::ptrdiff_t>(0, lo_i - half);
    const auto last = std::min<std::ptrdiff_t>(n, hi_i + half);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(last - first));
    for (auto i = first; i < last; ++i) w.push_back(rows_[static_cast<std::size_t>(i)].reading.weight_g);
    auto sm = smooth(w, cfg.smoothing_k);
    const auto off = lo_i - first;
    std::vector<double> inside(sm->begin() + off, sm->begin() + off + static_cast<std::ptrdiff_t>(count));
    return DailyBaseline{hive_id_, date, median_of(std::move(inside)), count};
  }

private:
  ReadingLog(std::string hive_id, std::filesystem::path path, Durability durability)
      : hive_id_(std::move(hive_id)), path_(std::move(path)), durability_(durability) {}

  using Iter = std::vector<StoredReading>::const_iterator;

  std::pair<Iter, Iter> bounds(Instant t0, Instant t1) const {
    auto by_time = [](const StoredReading& s, Instant t) { return s.reading.timestamp < t; };
    auto lo = std::lower_bound(rows_.begin(), rows_.end(), t0, by_time);
    auto hi = std::lower_bound(lo, rows_.end(), t1, by_time);
    return {lo, hi};
  }

  std::optional<StoreError> load() {
    if (path_.empty()) return std::nullopt;
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
    if (ec) return StoreError{StoreError::Code::Io, ec.message()};
    std::string content;
    if (std::filesystem::exists(path_)) {
      std::ifstream in(path_, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
      const auto nl = content.find('\n', pos);
      if (nl == std::string::npos) break;  // torn tail from an interrupted write
      ++line_no;
      const std::string_view line{content.data() + pos, nl - pos};
      auto rec = logfmt::decode(line, hive_id_);
      if (!rec || rec->row_index != rows_.size() + 1 ||
          (!rows_.empty() && rec->reading.timestamp < rows_.back().reading.timestamp))
        return StoreError{StoreError::Code::CorruptLog,
                          path_.string() + ": bad record at line " + std::to_string(line_no)};
      rows_.push_back(std::move(*rec));
      pos = nl + 1;
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) return StoreError{StoreError::Code::Io, std::strerror(errno)};
    if (pos < content.size() && ::ftruncate(fd_, static_cast<off_t>(pos)) != 0)
      return StoreError{StoreError::Code::Io, std::strerror(errno)};
    bytes_ = pos;
    return std::nullopt;
  }

  std::string hive_id_;
  std::filesystem::path path_;
  Durability durability_;
  int fd_ = -1;
  std::size_t bytes_ = 0;
  mutable std::shared_mutex mu_;
  std::vector<StoredReading> rows_;
};

/// Per-hive append-only logs under <data_dir>/<hive_id>/readings.log.
class HiveStore {
public:
  explicit HiveStore(std::filesystem::path data_dir = {}, Durability durability = Durability::Flush)
      : dir_(std::move(data_dir)), durability_(durability) {}

  const std::filesystem::path& data_dir() const noexcept { return dir_; }

  /// Opens (or creates) the log for a hive; idempotent.
  Result<ReadingLog*, StoreError> open_hive(const std::string& hive_id) {
    std::unique_lock lock(mu_);
    if (auto it = logs_.find(hive_id); it != logs_.end()) return it->second.get();
    auto log = ReadingLog::open(hive_id, dir_.empty() ? dir_ : dir_ / hive_id / "readings.log",
                                durability_);
    if (!log) return log.error();
    auto* raw = log.value().get();
    logs_.emplace(hive_id, std::move(log).value());
    return raw;
  }

  ReadingLog* find(const std::string& hive_id) const {
    std::shared_lock lock(mu_);
    auto it = logs_.find(hive_id);
    return it == logs_.end() ? nullptr : it->second.get();
  }

  Result<std::uint64_t, StoreError> append(const SensorReading& r) {
    auto* log = find(r.hive_id);
    if (!log) return unknown(r.hive_id);
    return log->append(r);
  }

  Result<std::vector<StoredReading>, StoreError> query_window(const std::string& hive, Instant t0,
                                                              Instant t1) const {
    auto* log = find(hive);
    if (!log) return unknown(hive);
    return log->query(t0, t1);
  }

  /// nullopt means Insufficient (< 3 samples in the window).
  Result<std::optional<DailyBaseline>, StoreError> daily_baseline(
      const std::string& hive, std::chrono::year_month_day date, const HiveConfig& cfg) const {
    auto* log = find(hive);
    if (!log) return unknown(hive);
    return log->daily_baseline(date, cfg);
  }

  Result<std::string, StoreError> export_csv(const std::string& hive, Instant t0, Instant t1,
                                             UtcOffset display) const {
    auto rows = query_window(hive, t0, t1);
    if (!rows) return rows.error();
    std::vector<SensorReading> readings;
    readings.reserve(rows->size());
    for (const auto& s : *rows) readings.push_back(s.reading);
    return format_csv(readings, display);
  }

  /// Appends every row of a CSV export; returns the number imported.
  Result<std::size_t, StoreError> import_csv(const std::string& hive, std::string_view text,
                                             const CsvImportOptions& opt) {
    auto* log = find(hive);
    if (!log) return unknown(hive);
    auto parsed = parse_csv(text, hive, opt);
    if (!parsed)
      return StoreError{StoreError::Code::InvalidReading,
                        "line " + std::to_string(parsed.error().line) + ": " + parsed.error().message};
    for (const auto& r : *parsed) {
      if (!kTempRange.contains(r.temp_c) || !kHumidityRange.contains(r.humidity_pct) ||
          !kSyrupRange.contains(r.syrup_ml) || !kWeightRange.contains(r.weight_g))
        return StoreError{StoreError::Code::InvalidReading, "value out of range"};
    }
    for (const auto& r : *parsed) {
      auto res = log->append(r);
      if (!res) return res.error();
    }
    return parsed->size();
  }

  std::vector<std::string> hives() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : logs_) out.push_back(k);
    return out;
  }

private:
  static StoreError unknown(const std::string& hive) {
    return StoreError{StoreError::Code::UnknownHive, "unknown hive: " + hive};
  }

  std::filesystem::path dir_;
  Durability durability_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<ReadingLog>> logs_;
};

}  // namespace hivelink
