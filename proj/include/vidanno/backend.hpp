#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vidanno/rle.hpp"
#include "vidanno/timeline.hpp"

namespace vidanno {

class ResidencyCounter;

inline constexpr int kProtocolVersion = 1;

struct SignedPoint {
  int x = 0;
  int y = 0;
  bool positive = true;
  friend bool operator==(const SignedPoint&, const SignedPoint&) = default;
};

/// Prompts for one label on one frame of the pass, as sent to a backend.
struct PromptBundle {
  int frame_pos = 0;
  LabelId label = 0;
  std::vector<SignedPoint> points;
  std::optional<BoxShape> box;
  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

struct MaskResult {
  int frame_pos = 0;
  LabelId label = 0;
  Bitmap mask;
};

struct BackendStats {
  std::optional<double> gpu_util_pct;
  std::optional<double> vram_mib;
};

/// Returning false from the sink stops the stream at the next frame boundary.
using MaskSink = std::function<bool(MaskResult)>;

// A segmentation backend. One state per pass: init_state, add_prompts for
// each label, one propagate stream, then reset.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual void init_state(const std::string& state_id,
                          const std::vector<std::filesystem::path>& frames) = 0;
  virtual void add_prompts(const std::string& state_id, const PromptBundle& prompts) = 0;
  virtual void propagate(const std::string& state_id, const MaskSink& sink) = 0;
  virtual void reset(const std::string& state_id) = 0;
  virtual BackendStats stats() = 0;
  /// Cheap liveness probe; never throws.
  virtual bool healthy() noexcept { return true; }
};

// ---------------------------------------------------------------------------
// Chroma-key reference backend

struct ChromaKeyConfig {
  int tolerance = 12;     // max-channel distance from the seed color
  int search_radius = 25; // re-seed search around the previous centroid
};

/// Max over channels of |a - b|.
inline int channel_distance(Rgb a, Rgb b) {
  return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

/// 4-connected region around `seed` of pixels within tolerance of `key`.
Bitmap flood_similar(const Image& frame, Pixel seed, Rgb key, int tolerance);

/// Union of the flood regions of the positive seeds minus every connected
/// piece that contains a negative point.
Bitmap chroma_key_segment(const Image& frame, const std::vector<Pixel>& seeds,
                          const std::vector<Pixel>& negatives, int tolerance);

/// The pixel closest to `from` within `radius` whose color is within
/// tolerance of `key`; ties go to the lowest (y, x).
std::optional<Pixel> find_reseed(const Image& frame, double from_x, double from_y, Rgb key,
                                 int tolerance, int radius);

class ReferenceBackend final : public Backend {
 public:
  explicit ReferenceBackend(ChromaKeyConfig config = {}, ResidencyCounter* residency = nullptr)
      : config_(config), residency_(residency) {}

  void init_state(const std::string& state_id,
                  const std::vector<std::filesystem::path>& frames) override;
  void add_prompts(const std::string& state_id, const PromptBundle& prompts) override;
  void propagate(const std::string& state_id, const MaskSink& sink) override;
  void reset(const std::string& state_id) override;
  BackendStats stats() override { return {}; }

 private:
  struct State {
    std::vector<std::filesystem::path> frames;
    std::map<LabelId, std::map<int, PromptBundle>> prompts;  // label -> frame_pos
  };
  State& state(const std::string& id);

  ChromaKeyConfig config_;
  ResidencyCounter* residency_;
  std::mutex mutex_;
  std::map<std::string, State> states_;
};

// ---------------------------------------------------------------------------
// Wire transport: newline-delimited JSON over TCP.

/// "host:port" split; throws Domain on malformed input.
std::pair<std::string, int> parse_address(const std::string& address);

// Backend proxy for a remote adapter. Connects lazily on first use; a
// cancelled stream drops the connection, which is reopened on demand.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(std::string address);
  ~RemoteBackend() override;

  void init_state(const std::string& state_id,
                  const std::vector<std::filesystem::path>& frames) override;
  void add_prompts(const std::string& state_id, const PromptBundle& prompts) override;
  void propagate(const std::string& state_id, const MaskSink& sink) override;
  void reset(const std::string& state_id) override;
  BackendStats stats() override;
  bool healthy() noexcept override;

 private:
  struct Connection;
  Connection& connection();
  void disconnect();

  std::string address_;
  std::unique_ptr<Connection> conn_;
  std::mutex mutex_;
};

// Serves any Backend over the wire protocol, one client at a time.
class BackendServer {
 public:
  /// Binds immediately; port 0 picks a free port.
  BackendServer(Backend& backend, const std::string& host, int port);
  ~BackendServer();
  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  int port() const noexcept { return port_; }
  void start();  // background accept loop
  void run();    // blocking accept loop
  void stop();

 private:
  void serve_client(int fd);

  Backend& backend_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

}  // namespace vidanno
