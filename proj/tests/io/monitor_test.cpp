#include <gtest/gtest.h>

#include <fstream>
#include <regex>

#include "vidanno/monitor.hpp"
#include "expect_error.hpp"
#include "temp_dir.hpp"

using namespace vidanno;
using namespace std::chrono_literals;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Monitor, SampleWithoutGpu) {
  ResourceSampler s;
  const ResourceSample r = s.sample();
  EXPECT_GT(r.rss_mib, 0.0);
  EXPECT_GE(r.cpu_pct, 0.0);
  EXPECT_FALSE(r.gpu_util_pct);
  EXPECT_FALSE(r.vram_mib);
  const std::string row = csv_row(r);
  EXPECT_EQ(row.substr(row.size() - 2), ",,");
}

TEST(Monitor, GpuFieldsComeFromBackendStats) {
  ResourceSampler s([] { return BackendStats{37.5, 1536.5}; });
  const ResourceSample r = s.sample();
  ASSERT_TRUE(r.vram_mib);
  EXPECT_DOUBLE_EQ(*r.vram_mib, 1536.5);
  EXPECT_NE(csv_row(r).find(",37.50,1536.50"), std::string::npos);
}

TEST(Monitor, FailingStatsLeaveFieldsEmpty) {
  ResourceSampler s([]() -> BackendStats { fail(ErrorKind::Io, "down"); });
  EXPECT_FALSE(s.sample().vram_mib);
}

TEST(Monitor, TimestampFormat) {
  const auto t = std::chrono::system_clock::time_point(std::chrono::milliseconds(1700000000123));
  EXPECT_EQ(iso8601(t), "2023-11-14T22:13:20.123Z");
}

TEST(Monitor, FiveHertzForTwoSeconds) {
  TempDir d;
  const auto path = d.path() / "monitor.csv";
  auto logger = log_to_csv(path, 5.0);
  std::this_thread::sleep_for(2s);
  logger->stop();
  const auto lines = lines_of(path);
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines[0], "timestamp_iso8601,cpu_pct,rss_mib,gpu_util_pct,vram_mib");
  const std::size_t rows = lines.size() - 1;
  EXPECT_GE(rows, 9u);
  EXPECT_LE(rows, 11u);
  const std::regex row(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d\.\d{3}Z,[0-9.]+,[0-9.]+,,)");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    EXPECT_TRUE(std::regex_match(lines[i], row)) << lines[i];
    if (i > 1) EXPECT_GE(lines[i].substr(0, 24), lines[i - 1].substr(0, 24));
  }
}

TEST(Monitor, ConcurrentLoggers) {
  TempDir d;
  auto a = log_to_csv(d.path() / "a.csv", 20.0);
  auto b = log_to_csv(d.path() / "b.csv", 20.0);
  std::this_thread::sleep_for(300ms);
  a->stop();
  b->stop();
  for (const char* f : {"a.csv", "b.csv"}) {
    std::ifstream in(d.path() / f);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(text.back(), '\n');
    EXPECT_GE(lines_of(d.path() / f).size(), 4u);
  }
}

TEST(Monitor, CallbackAndLatest) {
  std::atomic<int> seen{0};
  Monitor m({}, Monitor::Options{50.0, std::nullopt, 0.001}, [&](const ResourceSample&) { ++seen; });
  std::this_thread::sleep_for(100ms);
  m.stop();
  EXPECT_GE(seen.load(), 2);
  EXPECT_TRUE(m.latest());
  EXPECT_EQ(m.samples(), static_cast<std::size_t>(seen.load()));
}

TEST(Monitor, BadArguments) {
  EXPECT_EQ(error_kind([] { log_to_csv("/nonexistent/dir/m.csv"); }), ErrorKind::Io);
  EXPECT_EQ(error_kind([] { log_to_csv("/tmp/x.csv", 0.0); }), ErrorKind::Domain);
}
