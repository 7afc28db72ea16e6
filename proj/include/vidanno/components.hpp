#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vidanno/raster.hpp"

namespace vidanno {

enum class Connectivity { Four, Eight };

struct Components {
  Raster<int> labels;  // 0 = not in mask, 1..count otherwise
  int count = 0;
};

/// Connected components of the set pixels, numbered in raster order of their
/// first pixel.
inline Components connected_components(const Bitmap& mask, Connectivity conn) {
  static constexpr std::array<int, 8> dx = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr std::array<int, 8> dy = {0, 0, 1, -1, 1, -1, 1, -1};
  const int nbrs = conn == Connectivity::Four ? 4 : 8;
  Components out{Raster<int>(mask.width(), mask.height(), 0), 0};
  std::vector<Pixel> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || out.labels(x, y)) continue;
      const int id = ++out.count;
      out.labels(x, y) = id;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        for (int k = 0; k < nbrs; ++k) {
          const int nx = p.x + dx[k], ny = p.y + dy[k];
          if (mask.contains(nx, ny) && mask(nx, ny) && !out.labels(nx, ny)) {
            out.labels(nx, ny) = id;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return out;
}

/// Bitmap of a single component.
inline Bitmap component_mask(const Components& cc, int id) {
  Bitmap m(cc.labels.width(), cc.labels.height(), 0);
  auto src = cc.labels.pixels();
  auto dst = m.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == id ? 1 : 0;
  return m;
}

}  // namespace vidanno
