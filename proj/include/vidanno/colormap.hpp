#pragma once

#include <array>
#include <optional>

#include "vidanno/raster.hpp"

namespace vidanno {

inline constexpr int kColormapSize = 256;
inline constexpr int kBackgroundIndex = 0;

namespace detail {

constexpr Rgb voc_entry(int index) {
  int r = 0, g = 0, b = 0;
  int c = index;
  for (int j = 0; j < 8; ++j) {
    r |= ((c >> 0) & 1) << (7 - j);
    g |= ((c >> 1) & 1) << (7 - j);
    b |= ((c >> 2) & 1) << (7 - j);
    c >>= 3;
  }
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
}

constexpr std::array<Rgb, kColormapSize> make_voc_colormap() {
  std::array<Rgb, kColormapSize> map{};
  for (int i = 0; i < kColormapSize; ++i) map[i] = voc_entry(i);
  return map;
}

}  // namespace detail

/// The PASCAL VOC palette, generated at compile time.
inline constexpr std::array<Rgb, kColormapSize> kVocColormap = detail::make_voc_colormap();

inline Rgb colormap_entry(int index) {
  if (index < 0 || index >= kColormapSize) {
    fail(ErrorKind::Domain, "colormap index out of range: " + std::to_string(index));
  }
  return kVocColormap[static_cast<std::size_t>(index)];
}

/// Inverse of colormap_entry; empty for colors outside the palette.
inline std::optional<int> colormap_index(Rgb color) {
  for (int i = 0; i < kColormapSize; ++i) {
    if (kVocColormap[static_cast<std::size_t>(i)] == color) return i;
  }
  return std::nullopt;
}

}  // namespace vidanno
