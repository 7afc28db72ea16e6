#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vidanno/block_plan.hpp"
#include "vidanno/labels.hpp"
#include "vidanno/mask_store.hpp"

namespace vidanno {

enum class MediaKind { Video, ImageDir };

struct MediaInfo {
  std::filesystem::path source;
  MediaKind kind = MediaKind::ImageDir;
  int frames = 0;
  int width = 0;
  int height = 0;
  std::optional<double> fps;

  MediaBounds bounds() const { return {frames, width, height}; }
};

/// Counts decoded frames currently alive; tracks the high-water mark.
class ResidencyCounter {
 public:
  void acquire() noexcept {
    const int now = current_.fetch_add(1) + 1;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  void release() noexcept { current_.fetch_sub(1); }
  int current() const noexcept { return current_.load(); }
  int peak() const noexcept { return peak_.load(); }
  void reset_peak() noexcept { peak_.store(current_.load()); }

 private:
  std::atomic<int> current_{0};
  std::atomic<int> peak_{0};
};

/// A decoded frame whose lifetime is tracked by a ResidencyCounter.
class ResidentFrame {
 public:
  ResidentFrame() = default;
  ResidentFrame(Image image, ResidencyCounter* counter);
  ResidentFrame(ResidentFrame&& other) noexcept;
  ResidentFrame& operator=(ResidentFrame&& other) noexcept;
  ResidentFrame(const ResidentFrame&) = delete;
  ResidentFrame& operator=(const ResidentFrame&) = delete;
  ~ResidentFrame();

  const Image& image() const noexcept { return image_; }

 private:
  Image image_;
  ResidencyCounter* counter_ = nullptr;
};

/// Decodes an image file (any format OpenCV reads) to RGB.
Image read_image(const std::filesystem::path& path);
/// Writes an RGB image losslessly as PNG.
void write_png(const std::filesystem::path& path, const Image& image);
/// PNG bytes of an RGB image.
std::vector<std::uint8_t> encode_png(const Image& image);

std::string frame_file_name(FrameIndex t);

// Frame access for a loaded video or image directory. Frames are decoded one
// at a time and written to <workdir>/blocks/<b>/frame_%06d.png on demand.
class MediaPipeline {
 public:
  MediaPipeline(std::filesystem::path workdir, ResidencyCounter* counter);
  ~MediaPipeline();

  /// Probes the source, validates it and clears the working directory.
  void load(const std::filesystem::path& source, int block_size);

  bool loaded() const noexcept { return info_.frames > 0; }
  const MediaInfo& info() const noexcept { return info_; }
  const BlockPlan& plan() const noexcept { return plan_; }

  /// Extracts block b plus its lookahead frame; idempotent.
  std::filesystem::path materialize_block(int b);
  std::filesystem::path block_dir(int b) const;

  /// Path of frame t inside its block directory (materialising the block).
  std::filesystem::path frame_path(FrameIndex t);
  /// Path used when frame t is presented as the lookahead of block b.
  std::filesystem::path lookahead_path(int b);

  ResidentFrame read_frame(FrameIndex t);

  ResidencyCounter& residency() noexcept { return *counter_; }

  struct Source;  // decoder behind the pipeline; defined in the implementation

 private:

  void clear_workdir();

  std::filesystem::path workdir_;
  ResidencyCounter* counter_;
  MediaInfo info_;
  BlockPlan plan_;
  std::unique_ptr<Source> source_;
  std::vector<bool> materialized_;
  std::mutex mutex_;
};

enum class ViewMode { Original, Prompts, Overlay, Masks };

std::optional<ViewMode> parse_view_mode(const std::string& s);
std::string to_string(ViewMode mode);

/// 50% blend rounded half up: (a + b + 1) / 2 per channel.
inline std::uint8_t blend_half(std::uint8_t a, std::uint8_t b) {
  return static_cast<std::uint8_t>((static_cast<int>(a) + b + 1) / 2);
}

/// Frame blended with each label's color over its pixels.
Image render_overlay(const Image& frame, const LabelMap& composite);
/// Label map colored through the colormap (background black).
Image render_label_colors(const LabelMap& composite);
/// Frame with prompt glyphs: sign-colored dots and label-colored box outlines.
Image render_prompts(const Image& frame, const std::vector<Prompt>& prompts,
                     const LabelRegistry& labels);
/// Draws label names at the given centroids.
void draw_label_names(Image& image, const std::vector<std::pair<std::string, Centroid>>& names);

// LRU cache of rendered views keyed by (frame, mode, content version). A
// version change makes old entries unreachable; they age out.
class OverlayCache {
 public:
  explicit OverlayCache(std::size_t capacity = 64) : capacity_(capacity) {}

  std::shared_ptr<const Image> get(FrameIndex frame, ViewMode mode, std::uint64_t version);
  void put(FrameIndex frame, ViewMode mode, std::uint64_t version,
           std::shared_ptr<const Image> image);
  void clear();
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  using Key = std::tuple<FrameIndex, int, std::uint64_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(std::get<0>(k)) << 34) ^
                                        (static_cast<std::uint64_t>(std::get<1>(k)) << 32) ^
                                        std::get<2>(k));
    }
  };
  using Entry = std::pair<Key, std::shared_ptr<const Image>>;

  std::size_t capacity_;
  std::list<Entry> lru_;
  std::unordered_map<Key, std::list<Entry>::iterator, KeyHash> index_;
  mutable std::mutex mutex_;
};

}  // namespace vidanno
