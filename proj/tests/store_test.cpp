#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <random>

#include "hivelink/store.hpp"
#include "test_util.hpp"

using namespace hivelink;
using namespace std::chrono_literals;

namespace {

const std::string kGoldenPath = std::string(HIVELINK_TEST_DATA) + "/bench_log.csv";

HiveConfig config_for(const std::string& hive) {
  HiveConfig c;
  c.hive_id = hive;
  return c;
}

SensorReading reading_at(Instant t, double weight) {
  SensorReading r;
  r.hive_id = "H1";
  r.timestamp = t;
  r.temp_c = 31;
  r.humidity_pct = 55;
  r.syrup_ml = 500;
  r.weight_g = weight;
  r.light = true;
  return r;
}

const Instant kT0 = *parse_instant("2023-01-18T00:00:00Z");

}  // namespace

TEST(HiveStore, FirstAppendIsRowOne) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto row = store.append(reading_at(kT0, 0));
  ASSERT_TRUE(row.ok());
  EXPECT_EQ(*row, 1u);
}

TEST(HiveStore, BenchLogRowsGetIndicesOneTo36) {
  test_util::TempDir dir;
  HiveStore store(dir.path());
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto rows = parse_csv(test_util::read_file(kGoldenPath), "H1");
  ASSERT_TRUE(rows.ok());
  std::uint64_t expect = 1;
  for (const auto& r : *rows) {
    auto idx = store.append(r);
    ASSERT_TRUE(idx.ok());
    EXPECT_EQ(*idx, expect++);
  }
  EXPECT_EQ(expect, 37u);
}

TEST(HiveStore, UnknownHive) {
  HiveStore store;
  EXPECT_EQ(store.append(reading_at(kT0, 0)).error().code, StoreError::Code::UnknownHive);
  EXPECT_EQ(store.query_window("nope", kT0, kT0 + 1h).error().code, StoreError::Code::UnknownHive);
  EXPECT_EQ(store.export_csv("nope", kT0, kT0, UtcOffset{0}).error().code,
            StoreError::Code::UnknownHive);
  EXPECT_EQ(store.daily_baseline("nope", local_date(kT0, UtcOffset{0}), config_for("nope"))
                .error()
                .code,
            StoreError::Code::UnknownHive);
}

TEST(HiveStore, RejectsOutOfOrderAppend) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  ASSERT_TRUE(store.append(reading_at(kT0 + 10s, 0)).ok());
  EXPECT_EQ(store.append(reading_at(kT0, 0)).error().code, StoreError::Code::OutOfOrder);
  EXPECT_TRUE(store.append(reading_at(kT0 + 10s, 1)).ok());
}

TEST(HiveStore, ReopenRestoresLog) {
  test_util::TempDir dir;
  {
    HiveStore store(dir.path());
    ASSERT_TRUE(store.open_hive("H1").ok());
    for (int i = 0; i < 10; ++i) ASSERT_TRUE(store.append(reading_at(kT0 + i * 1s, i * 1.5)).ok());
  }
  HiveStore store(dir.path());
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto rows = store.query_window("H1", Instant::min(), Instant::max());
  ASSERT_EQ(rows->size(), 10u);
  EXPECT_EQ((*rows)[9].row_index, 10u);
  EXPECT_DOUBLE_EQ((*rows)[9].reading.weight_g, 13.5);
  EXPECT_EQ(*store.append(reading_at(kT0 + 20s, 0)), 11u);
}

TEST(HiveStore, ChecksumMismatchIsCorruptLog) {
  test_util::TempDir dir;
  {
    HiveStore store(dir.path());
    ASSERT_TRUE(store.open_hive("H1").ok());
    for (int i = 0; i < 3; ++i) ASSERT_TRUE(store.append(reading_at(kT0 + i * 1s, 100)).ok());
  }
  const auto path = dir.path() / "H1" / "readings.log";
  auto text = test_util::read_file(path);
  const auto pos = text.find("\t100\t");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 1] = '9';
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
  HiveStore store(dir.path());
  auto opened = store.open_hive("H1");
  ASSERT_FALSE(opened.ok());
  EXPECT_EQ(opened.error().code, StoreError::Code::CorruptLog);
}

TEST(HiveStore, TornTailIsDiscarded) {
  test_util::TempDir dir;
  {
    HiveStore store(dir.path());
    ASSERT_TRUE(store.open_hive("H1").ok());
    for (int i = 0; i < 3; ++i) ASSERT_TRUE(store.append(reading_at(kT0 + i * 1s, 100)).ok());
  }
  const auto path = dir.path() / "H1" / "readings.log";
  std::ofstream(path, std::ios::binary | std::ios::app) << "v1\t4\t1674";
  HiveStore store(dir.path());
  ASSERT_TRUE(store.open_hive("H1").ok());
  EXPECT_EQ(*store.append(reading_at(kT0 + 5s, 1)), 4u);
  HiveStore again(dir.path());
  ASSERT_TRUE(again.open_hive("H1").ok());
  EXPECT_EQ(again.find("H1")->size(), 4u);
}

// A child process appends and acknowledges each row over a pipe; the parent
// SIGKILLs it mid-stream and checks every acknowledged row survived.
TEST(HiveStore, AcknowledgedAppendsSurviveKill) {
  test_util::TempDir dir;
  int fds[2];
  ASSERT_EQ(::pipe(fds), 0);
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::close(fds[0]);
    HiveStore store(dir.path());
    if (!store.open_hive("H1").ok()) ::_exit(2);
    for (int i = 0;; ++i) {
      auto row = store.append(reading_at(kT0 + i * 1s, i));
      if (!row.ok()) ::_exit(3);
      const std::uint64_t ack = *row;
      if (::write(fds[1], &ack, sizeof ack) != sizeof ack) ::_exit(4);
    }
  }
  ::close(fds[1]);
  std::uint64_t acked = 0, v = 0;
  while (acked < 200 && ::read(fds[0], &v, sizeof v) == sizeof v) acked = v;
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ::close(fds[0]);
  ASSERT_GE(acked, 200u);

  HiveStore store(dir.path());
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto rows = *store.query_window("H1", Instant::min(), Instant::max());
  ASSERT_GE(rows.size(), acked);
  for (std::uint64_t i = 0; i < acked; ++i) {
    EXPECT_EQ(rows[i].row_index, i + 1);
    EXPECT_DOUBLE_EQ(rows[i].reading.weight_g, static_cast<double>(i));
  }
}

TEST(QueryWindow, EmptyAndCoveringRanges) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  for (int i = 0; i < 20; ++i) ASSERT_TRUE(store.append(reading_at(kT0 + i * 1min, i)).ok());
  EXPECT_TRUE(store.query_window("H1", kT0 + 5min, kT0 + 5min)->empty());
  EXPECT_EQ(store.query_window("H1", kT0, kT0 + 20min)->size(), 20u);
  EXPECT_TRUE(store.query_window("H1", kT0 + 20min, kT0)->empty());
}

TEST(QueryWindow, RandomRangesMatchLinearScan) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  std::mt19937_64 rng(5);
  std::vector<SensorReading> all;
  Instant t = kT0;
  for (int i = 0; i < 500; ++i) {
    t += std::chrono::seconds(rng() % 3);  // duplicates allowed
    all.push_back(reading_at(t, i));
    ASSERT_TRUE(store.append(all.back()).ok());
  }
  const auto span_ms = to_epoch_ms(t) - to_epoch_ms(kT0);
  for (int q = 0; q < 1000; ++q) {
    auto a = kT0 + Millis{static_cast<std::int64_t>(rng() % (span_ms + 2000)) - 1000};
    auto b = kT0 + Millis{static_cast<std::int64_t>(rng() % (span_ms + 2000)) - 1000};
    if (b < a) std::swap(a, b);
    std::vector<double> expect;
    for (const auto& r : all)
      if (a <= r.timestamp && r.timestamp < b) expect.push_back(r.weight_g);
    std::vector<double> got;
    for (const auto& s : *store.query_window("H1", a, b)) got.push_back(s.reading.weight_g);
    ASSERT_EQ(got, expect);
  }
}

TEST(DailyBaseline, ConstantNight) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto cfg = config_for("H1");
  cfg.utc_offset = UtcOffset{0};
  for (int m = 0; m < 24 * 60; m += 5) ASSERT_TRUE(store.append(reading_at(kT0 + m * 1min, 10000)).ok());
  auto b = store.daily_baseline("H1", local_date(kT0 + 1h, cfg.utc_offset), cfg);
  ASSERT_TRUE(b.ok());
  ASSERT_TRUE(b->has_value());
  EXPECT_DOUBLE_EQ((*b)->weight_g, 10000);
  EXPECT_EQ((*b)->sample_count, 12u);  // 00:00..00:55 (the 23:00 half is before the log)
}

TEST(DailyBaseline, TwoSamplesInsufficient) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto cfg = config_for("H1");
  cfg.utc_offset = UtcOffset{0};
  ASSERT_TRUE(store.append(reading_at(kT0 - 10min, 10000)).ok());
  ASSERT_TRUE(store.append(reading_at(kT0 + 10min, 10000)).ok());
  auto b = store.daily_baseline("H1", local_date(kT0, cfg.utc_offset), cfg);
  ASSERT_TRUE(b.ok());
  EXPECT_FALSE(b->has_value());
}

TEST(DailyBaseline, DiurnalTraceGivesNightPlateau) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto cfg = config_for("H1");
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0, 5);
  const auto off = cfg.utc_offset;
  const auto day0 = local_midnight(std::chrono::year_month_day{std::chrono::year{2023} / 5 / 1}, off);
  std::vector<SensorReading> all;
  for (int m = 0; m < 3 * 24 * 60; ++m) {
    const Instant t = day0 + m * 1min;
    const double hod = local_time_of_day(t, off).count() / 60.0;
    double dip = 0;
    if (hod >= 8 && hod < 18) dip = 300 * std::sin(M_PI * (hod - 8) / 10);
    all.push_back(reading_at(t, std::round((12000 - dip + noise(rng)) * 100) / 100));
    ASSERT_TRUE(store.append(all.back()).ok());
  }
  // Brute force: smooth the full log, then take the median inside the window.
  std::vector<double> w;
  for (const auto& r : all) w.push_back(r.weight_g);
  const auto sm = *smooth(w, cfg.smoothing_k);
  for (int d = 1; d < 3; ++d) {
    const auto date = local_date(day0 + d * 24h + 1h, off);
    const Instant mid = local_midnight(date, off);
    std::vector<double> inside;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i].timestamp >= mid - 1h && all[i].timestamp < mid + 1h) inside.push_back(sm[i]);
    std::sort(inside.begin(), inside.end());
    const double expect = inside.size() % 2 ? inside[inside.size() / 2]
                                            : (inside[inside.size() / 2 - 1] + inside[inside.size() / 2]) / 2;
    auto b = store.daily_baseline("H1", date, cfg);
    ASSERT_TRUE(b.ok() && b->has_value());
    EXPECT_DOUBLE_EQ((*b)->weight_g, expect);
    EXPECT_EQ((*b)->sample_count, 120u);
    EXPECT_NEAR((*b)->weight_g, 12000, 3);
  }
}

TEST(ExportCsv, BenchLogRow20) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  auto rows = *parse_csv(test_util::read_file(kGoldenPath), "H1");
  SensorReading r20 = rows[18];
  ASSERT_TRUE(store.append(r20).ok());
  auto csv = store.export_csv("H1", Instant::min(), Instant::max(), UtcOffset{330});
  ASSERT_TRUE(csv.ok());
  EXPECT_EQ(*csv, std::string(kCsvHeader) + "\n01/18/2023,12:36 PM,30.5,50,508,-28.6\n");
}

TEST(ExportCsv, EmptyRangeIsHeaderOnly) {
  HiveStore store;
  ASSERT_TRUE(store.open_hive("H1").ok());
  ASSERT_TRUE(store.append(reading_at(kT0, 1)).ok());
  EXPECT_EQ(*store.export_csv("H1", kT0, kT0, UtcOffset{330}), std::string(kCsvHeader) + "\n");
}

TEST(ExportCsv, GoldenImportExportRoundTrip) {
  test_util::TempDir dir;
  HiveStore store(dir.path());
  ASSERT_TRUE(store.open_hive("H1").ok());
  const auto golden = test_util::read_file(kGoldenPath);
  CsvImportOptions opt;
  ASSERT_EQ(*store.import_csv("H1", golden, opt), 36u);
  auto csv = store.export_csv("H1", Instant::min(), Instant::max(), opt.offset);
  ASSERT_TRUE(csv.ok());
  EXPECT_EQ(*csv, test_util::normalize_noon_hours(golden));
  // Standard-form files are a fixed point.
  HiveStore second;
  ASSERT_TRUE(second.open_hive("H1").ok());
  ASSERT_TRUE(second.import_csv("H1", *csv, opt).ok());
  EXPECT_EQ(*second.export_csv("H1", Instant::min(), Instant::max(), opt.offset), *csv);
}

TEST(ExportCsv, RandomWellFormedFilesRoundTrip) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::string text{kCsvHeader};
    text += '\n';
    int minute = static_cast<int>(rng() % 600);
    int day = 1 + static_cast<int>(rng() % 28);
    const int n = static_cast<int>(rng() % 50);
    for (int i = 0; i < n; ++i) {
      minute += static_cast<int>(rng() % 90);
      if (minute >= 1440) {
        minute -= 1440;
        if (++day > 28) break;
      }
      const int h24 = minute / 60, h12 = h24 % 12 == 0 ? 12 : h24 % 12;
      char line[160];
      std::snprintf(line, sizeof line, "03/%02d/2024,%d:%02d %s,%s,%s,%s,%s\n", day, h12, minute % 60,
                    h24 < 12 ? "AM" : "PM",
                    format_number(std::round((25 + (rng() % 100) / 10.0) * 10) / 10).c_str(),
                    format_number(static_cast<double>(rng() % 101)).c_str(),
                    format_number(static_cast<double>(rng() % 5001)).c_str(),
                    format_number((static_cast<double>(rng() % 2000000) - 500000) / 100).c_str());
      text += line;
    }
    HiveStore store;
    ASSERT_TRUE(store.open_hive("H").ok());
    auto imported = store.import_csv("H", text, CsvImportOptions{});
    ASSERT_TRUE(imported.ok()) << imported.error().message;
    EXPECT_EQ(*store.export_csv("H", Instant::min(), Instant::max(), UtcOffset{330}), text);
  }
}

TEST(ExportCsv, FormatNumberIsMinimal) {
  EXPECT_EQ(format_number(30.0), "30");
  EXPECT_EQ(format_number(-28.6), "-28.6");
  EXPECT_EQ(format_number(0.87), "0.87");
  EXPECT_EQ(format_number(-0.0), "0");
}
