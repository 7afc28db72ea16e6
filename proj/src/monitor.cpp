#include "vidanno/monitor.hpp"

#include <unistd.h>

#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace vidanno {

namespace {

std::optional<double> process_cpu_seconds() {
  std::ifstream in("/proc/self/stat");
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  const auto close = line.rfind(')');
  if (close == std::string::npos) return std::nullopt;
  std::istringstream rest(line.substr(close + 2));
  // Fields after the command name start at "state" (field 3); utime and
  // stime are fields 14 and 15.
  std::string field;
  unsigned long long utime = 0, stime = 0;
  for (int i = 3; i <= 15 && rest >> field; ++i) {
    if (i == 14) utime = std::stoull(field);
    if (i == 15) stime = std::stoull(field);
  }
  const long ticks = sysconf(_SC_CLK_TCK);
  if (ticks <= 0) return std::nullopt;
  return static_cast<double>(utime + stime) / static_cast<double>(ticks);
}

std::optional<double> resident_mib() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      std::istringstream s(line.substr(6));
      double kib = 0;
      s >> kib;
      return kib / 1024.0;
    }
  }
  return std::nullopt;
}

std::string fmt(double v, const char* pattern) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

ResourceSampler::ResourceSampler(GpuStatsFn gpu)
    : gpu_(std::move(gpu)),
      last_cpu_s_(process_cpu_seconds().value_or(0)),
      last_wall_(std::chrono::steady_clock::now()) {}

ResourceSample ResourceSampler::sample() {
  ResourceSample s;
  s.timestamp = std::chrono::system_clock::now();
  const auto now = std::chrono::steady_clock::now();
  if (auto cpu = process_cpu_seconds()) {
    const double wall = std::chrono::duration<double>(now - last_wall_).count();
    if (wall > 0) s.cpu_pct = std::max(0.0, (*cpu - last_cpu_s_) / wall * 100.0);
    last_cpu_s_ = *cpu;
  }
  last_wall_ = now;
  s.rss_mib = resident_mib().value_or(0);
  if (gpu_) {
    try {
      const BackendStats b = gpu_();
      s.gpu_util_pct = b.gpu_util_pct;
      s.vram_mib = b.vram_mib;
    } catch (const std::exception&) {
      // GPU fields stay empty
    }
  }
  return s;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms % 1000));
  return buf;
}

std::string csv_row(const ResourceSample& s) {
  return iso8601(s.timestamp) + ',' + fmt(s.cpu_pct, "%.2f") + ',' + fmt(s.rss_mib, "%.2f") + ',' +
         (s.gpu_util_pct ? fmt(*s.gpu_util_pct, "%.2f") : "") + ',' +
         (s.vram_mib ? fmt(*s.vram_mib, "%.2f") : "");
}

Monitor::Monitor(GpuStatsFn gpu, Options options, Callback on_sample)
    : sampler_(std::move(gpu)), options_(std::move(options)), on_sample_(std::move(on_sample)) {
  if (!(options_.rate_hz > 0)) fail(ErrorKind::Domain, "monitor rate must be positive");
  if (options_.csv) {
    csv_ = std::fopen(options_.csv->c_str(), "w");
    if (!csv_) fail(ErrorKind::Io, "cannot write monitor log " + options_.csv->string());
    std::fputs(kMonitorCsvHeader, csv_);
    std::fputc('\n', csv_);
    std::fflush(csv_);
  }
  thread_ = std::thread([this] { loop(); });
}

Monitor::~Monitor() { stop(); }

void Monitor::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
  if (csv_) {
    std::fclose(csv_);
    csv_ = nullptr;
  }
}

std::optional<ResourceSample> Monitor::latest() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

std::size_t Monitor::samples() const {
  std::lock_guard lock(mutex_);
  return count_;
}

void Monitor::loop() {
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / options_.rate_hz));
  auto next = std::chrono::steady_clock::now();
  for (;;) {
    const ResourceSample s = sampler_.sample();
    if (csv_) {
      const std::string row = csv_row(s) + '\n';
      std::fwrite(row.data(), 1, row.size(), csv_);
      std::fflush(csv_);
    }
    bool warn = false;
    {
      std::lock_guard lock(mutex_);
      latest_ = s;
      ++count_;
      if (options_.rss_warn_mib && s.rss_mib > *options_.rss_warn_mib && !warned_) {
        warned_ = warn = true;
      }
    }
    if (warn) {
      std::cerr << "warning: resident memory " << fmt(s.rss_mib, "%.1f") << " MiB exceeds limit "
                << fmt(*options_.rss_warn_mib, "%.1f") << " MiB\n";
    }
    if (on_sample_) on_sample_(s);

    next += period;
    std::unique_lock lock(mutex_);
    if (wake_.wait_until(lock, next, [this] { return stopping_; })) return;
  }
}

std::unique_ptr<Monitor> log_to_csv(const std::filesystem::path& path, double rate_hz,
                                    GpuStatsFn gpu) {
  Monitor::Options o;
  o.rate_hz = rate_hz;
  o.csv = path;
  return std::make_unique<Monitor>(std::move(gpu), o);
}

}  // namespace vidanno
