#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "vidanno/timeline.hpp"

namespace vidanno {

// Partition of [0, F) into consecutive blocks of N frames; the last block
// may be shorter.
class BlockPlan {
 public:
  BlockPlan() = default;
  BlockPlan(int frame_count, int block_size) : frames_(frame_count), size_(block_size) {
    if (block_size < 1) fail(ErrorKind::Domain, "block size must be >= 1");
    if (frame_count < 1) fail(ErrorKind::Domain, "frame count must be >= 1");
    for (int start = 0; start < frame_count; start += block_size) {
      blocks_.push_back({start, std::min(start + block_size, frame_count) - 1});
    }
  }

  int block_size() const noexcept { return size_; }
  int frame_count() const noexcept { return frames_; }
  int block_count() const noexcept { return static_cast<int>(blocks_.size()); }
  const std::vector<FrameRange>& blocks() const noexcept { return blocks_; }

  const FrameRange& block(int b) const {
    if (b < 0 || b >= block_count()) fail(ErrorKind::Domain, "block index out of range");
    return blocks_[static_cast<std::size_t>(b)];
  }

  int block_of(FrameIndex t) const {
    if (t < 0 || t >= frames_) fail(ErrorKind::Domain, "frame out of range");
    return t / size_;
  }

  /// First frame of the next block; none for the final block.
  std::optional<FrameIndex> lookahead(int b) const {
    const FrameRange& r = block(b);
    if (b + 1 >= block_count()) return std::nullopt;
    return r.end + 1;
  }

 private:
  int frames_ = 0;
  int size_ = 0;
  std::vector<FrameRange> blocks_;
};

}  // namespace vidanno
