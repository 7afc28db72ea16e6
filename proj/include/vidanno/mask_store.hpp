#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "vidanno/timeline.hpp"

namespace vidanno {

enum class MaskSource { Prompted, Propagated, Lookahead };

struct InstanceMask {
  FrameIndex frame = 0;
  LabelId label = 0;
  Bitmap bitmap;
  MaskSource source = MaskSource::Propagated;
  std::uint64_t version = 0;
};

struct Centroid {
  double x = 0.0;
  double y = 0.0;
};

/// Mean of set-pixel coordinates, or nothing for an empty mask.
inline std::optional<Centroid> centroid(const Bitmap& mask) {
  double sx = 0.0, sy = 0.0;
  std::uint64_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return Centroid{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

struct CommitResult {
  int committed = 0;
  int rejected = 0;
};

// Per-instance mask storage. Lookahead masks live in a separate table and
// never reach composite() or exports.
class MaskStore {
 public:
  MaskStore() = default;
  MaskStore(int width, int height) : width_(width), height_(height) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  /// Stores results inside `writable`; results on a checkpoint frame or
  /// outside the range are counted as rejected.
  CommitResult commit(std::vector<InstanceMask> results, FrameRange writable,
                      const std::set<FrameIndex>& checkpoints) {
    for (const auto& m : results) check_dims(m.bitmap);
    CommitResult out;
    for (auto& m : results) {
      if (!writable.contains(m.frame) || checkpoints.contains(m.frame) ||
          m.source == MaskSource::Lookahead) {
        ++out.rejected;
        continue;
      }
      store(std::move(m));
      ++out.committed;
    }
    return out;
  }

  void commit_lookahead(InstanceMask m) {
    check_dims(m.bitmap);
    m.source = MaskSource::Lookahead;
    m.version = ++version_;
    lookahead_[{m.frame, m.label}] = std::move(m);
  }

  /// Reinstates a mask with its recorded version (session load).
  void restore(InstanceMask m) {
    check_dims(m.bitmap);
    version_ = std::max(version_, m.version);
    ++frame_revision_[m.frame];
    auto key = std::pair(m.frame, m.label);
    if (m.source == MaskSource::Lookahead) {
      lookahead_[key] = std::move(m);
    } else {
      masks_[key] = std::move(m);
    }
  }

  const InstanceMask* get(FrameIndex frame, LabelId label) const {
    auto it = masks_.find({frame, label});
    return it == masks_.end() ? nullptr : &it->second;
  }

  const InstanceMask* lookahead(FrameIndex frame, LabelId label) const {
    auto it = lookahead_.find({frame, label});
    return it == lookahead_.end() ? nullptr : &it->second;
  }

  std::vector<const InstanceMask*> lookahead_at(FrameIndex frame) const {
    std::vector<const InstanceMask*> out;
    for (auto it = lookahead_.lower_bound({frame, 0});
         it != lookahead_.end() && it->first.first == frame; ++it) {
      out.push_back(&it->second);
    }
    return out;
  }

  /// Visible instances at a frame, ascending label.
  std::vector<const InstanceMask*> at(FrameIndex frame) const {
    std::vector<const InstanceMask*> out;
    for (auto it = masks_.lower_bound({frame, 0});
         it != masks_.end() && it->first.first == frame; ++it) {
      out.push_back(&it->second);
    }
    return out;
  }

  bool has_mask(FrameIndex frame) const {
    auto it = masks_.lower_bound({frame, 0});
    return it != masks_.end() && it->first.first == frame;
  }
  bool has_mask(FrameIndex frame, LabelId label) const { return masks_.contains({frame, label}); }

  /// Frames holding at least one non-empty visible mask, ascending.
  std::vector<FrameIndex> annotated_frames() const {
    std::vector<FrameIndex> out;
    for (const auto& [key, m] : masks_) {
      if ((out.empty() || out.back() != key.first) && count_set(m.bitmap) > 0) {
        out.push_back(key.first);
      }
    }
    return out;
  }

  /// Highest label wins where instances overlap; 0 elsewhere.
  LabelMap composite(FrameIndex frame) const {
    LabelMap map(width_, height_, 0);
    auto out = map.pixels();
    for (const InstanceMask* m : at(frame)) {  // ascending label: later writes win
      auto src = m->bitmap.pixels();
      const auto id = static_cast<std::uint8_t>(m->label);
      for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i]) out[i] = id;
      }
    }
    return map;
  }

  /// Bumped on every change to the frame's visible masks; cache key input.
  std::uint64_t frame_revision(FrameIndex frame) const {
    auto it = frame_revision_.find(frame);
    return it == frame_revision_.end() ? 0 : it->second;
  }

  std::uint64_t version() const noexcept { return version_; }

  std::vector<const InstanceMask*> all() const {
    std::vector<const InstanceMask*> out;
    for (const auto& [key, m] : masks_) out.push_back(&m);
    return out;
  }
  std::vector<const InstanceMask*> all_lookahead() const {
    std::vector<const InstanceMask*> out;
    for (const auto& [key, m] : lookahead_) out.push_back(&m);
    return out;
  }

 private:
  void check_dims(const Bitmap& b) const {
    if (b.width() != width_ || b.height() != height_) {
      fail(ErrorKind::Format, "mask dimensions do not match media");
    }
  }

  void store(InstanceMask m) {
    m.version = ++version_;
    ++frame_revision_[m.frame];
    masks_[{m.frame, m.label}] = std::move(m);
  }

  int width_ = 0;
  int height_ = 0;
  std::uint64_t version_ = 0;
  std::map<std::pair<FrameIndex, LabelId>, InstanceMask> masks_;
  std::map<std::pair<FrameIndex, LabelId>, InstanceMask> lookahead_;
  std::map<FrameIndex, std::uint64_t> frame_revision_;
};

}  // namespace vidanno
