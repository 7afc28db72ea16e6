#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "vidanno/raster.hpp"

namespace vidanno {

// Row-major run lengths, alternating background/foreground and always
// starting with a (possibly empty) background run.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline RleMask rle_encode(const Bitmap& mask) {
  if (mask.width() <= 0 || mask.height() <= 0) {
    fail(ErrorKind::Domain, "rle_encode: bitmap dimensions must be positive");
  }
  RleMask rle{mask.width(), mask.height(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (auto v : mask.pixels()) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      rle.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

inline Bitmap rle_decode(const RleMask& rle) {
  if (rle.width <= 0 || rle.height <= 0) {
    fail(ErrorKind::Format, "rle_decode: dimensions must be positive");
  }
  const std::uint64_t total =
      std::accumulate(rle.counts.begin(), rle.counts.end(), std::uint64_t{0});
  const std::uint64_t area = static_cast<std::uint64_t>(rle.width) * rle.height;
  if (total != area) {
    fail(ErrorKind::Format, "rle_decode: run lengths sum to " + std::to_string(total) +
                                ", expected " + std::to_string(area));
  }
  Bitmap mask(rle.width, rle.height);
  auto px = mask.pixels();
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto run : rle.counts) {
    for (std::uint32_t i = 0; i < run; ++i) px[pos++] = value;
    value ^= 1;
  }
  return mask;
}

/// True when `rle` is the form rle_encode would produce: no empty runs other
/// than a leading zero-length background run.
inline bool rle_is_canonical(const RleMask& rle) {
  if (rle.counts.empty()) return false;
  for (std::size_t i = 1; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0) return false;
  }
  return !(rle.counts.size() == 1 && rle.counts[0] == 0);
}

}  // namespace vidanno
