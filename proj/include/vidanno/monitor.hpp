#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "vidanno/backend.hpp"

namespace vidanno {

struct ResourceSample {
  std::chrono::system_clock::time_point timestamp;
  double cpu_pct = 0;  // process CPU time over wall time since the previous sample
  double rss_mib = 0;
  std::optional<double> gpu_util_pct;
  std::optional<double> vram_mib;
};

using GpuStatsFn = std::function<BackendStats()>;

/// Reads process CPU and resident memory from /proc, GPU figures from the
/// backend. Missing sources leave fields at zero or empty.
class ResourceSampler {
 public:
  explicit ResourceSampler(GpuStatsFn gpu = {});
  ResourceSample sample();

 private:
  GpuStatsFn gpu_;
  double last_cpu_s_ = 0;
  std::chrono::steady_clock::time_point last_wall_;
};

inline constexpr const char* kMonitorCsvHeader =
    "timestamp_iso8601,cpu_pct,rss_mib,gpu_util_pct,vram_mib";

/// UTC, millisecond precision, e.g. 2026-03-01T09:15:02.400Z.
std::string iso8601(std::chrono::system_clock::time_point t);
std::string csv_row(const ResourceSample& s);

/// Samples on its own thread at a fixed rate. Each tick optionally appends a
/// CSV row (flushed per row) and hands the sample to a callback.
class Monitor {
 public:
  struct Options {
    double rate_hz = 5.0;
    std::optional<std::filesystem::path> csv;
    std::optional<double> rss_warn_mib;  // one warning line when exceeded
  };
  using Callback = std::function<void(const ResourceSample&)>;

  Monitor(GpuStatsFn gpu, Options options, Callback on_sample = {});
  ~Monitor();
  Monitor(const Monitor&) = delete;
  Monitor& operator=(const Monitor&) = delete;

  void stop();
  std::optional<ResourceSample> latest() const;
  std::size_t samples() const;
  double rate_hz() const noexcept { return options_.rate_hz; }

 private:
  void loop();

  ResourceSampler sampler_;
  Options options_;
  Callback on_sample_;
  std::FILE* csv_ = nullptr;

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
  std::optional<ResourceSample> latest_;
  std::size_t count_ = 0;
  bool warned_ = false;
  std::thread thread_;
};

/// Starts a CSV logger; destroy or stop() the handle to close the file.
std::unique_ptr<Monitor> log_to_csv(const std::filesystem::path& path, double rate_hz = 5.0,
                                    GpuStatsFn gpu = {});

}  // namespace vidanno
