#pragma once

#include <array>
#include <vector>

#include "vidanno/components.hpp"

namespace vidanno {

namespace detail {
// Clockwise (y down) starting north.
inline constexpr std::array<int, 8> kMooreDx = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr std::array<int, 8> kMooreDy = {-1, -1, 0, 1, 1, 1, 0, -1};

inline int moore_direction(Pixel from, Pixel to) {
  for (int i = 0; i < 8; ++i) {
    if (from.x + kMooreDx[i] == to.x && from.y + kMooreDy[i] == to.y) return i;
  }
  return -1;
}
}  // namespace detail

/// Outer boundary of the component containing the first set pixel (raster
/// order), traced clockwise with Moore-neighbour tracing; tracing stops when
/// the initial move out of the start pixel would repeat. Pixels on one-pixel-wide parts appear more than once.
inline std::vector<Pixel> trace_outer_contour(const Bitmap& mask) {
  Pixel start{-1, -1};
  for (int y = 0; y < mask.height() && start.x < 0; ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        start = {x, y};
        break;
      }
    }
  }
  if (start.x < 0) return {};

  auto set = [&](Pixel p) { return mask.contains(p.x, p.y) && mask(p.x, p.y) != 0; };

  std::vector<Pixel> contour{start};
  Pixel cur = start;
  Pixel back{start.x - 1, start.y};
  const std::size_t limit = 4 * mask.size() + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    const int d = detail::moore_direction(cur, back);
    Pixel next{-1, -1};
    Pixel prev = back;
    for (int k = 1; k <= 8; ++k) {
      const int idx = (d + k) % 8;
      const Pixel cand{cur.x + detail::kMooreDx[idx], cur.y + detail::kMooreDy[idx]};
      if (set(cand)) {
        next = cand;
        break;
      }
      prev = cand;
    }
    if (next.x < 0) break;  // isolated pixel
    // Closed once the first move out of start is about to repeat.
    if (cur == start && contour.size() > 1 && next == contour[1]) break;
    back = prev;
    cur = next;
    contour.push_back(cur);
  }
  if (contour.size() > 1 && contour.back() == start) contour.pop_back();
  return contour;
}

/// Drops vertices where the boundary continues straight on.
inline std::vector<Pixel> compress_collinear(const std::vector<Pixel>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return ring;
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel& a = ring[(i + n - 1) % n];
    const Pixel& b = ring[i];
    const Pixel& c = ring[(i + 1) % n];
    if (b.x - a.x != c.x - b.x || b.y - a.y != c.y - b.y) out.push_back(b);
  }
  return out;
}

/// One simplified outer polygon per 8-connected component, in component order.
inline std::vector<std::vector<Pixel>> outer_polygons(const Bitmap& mask) {
  std::vector<std::vector<Pixel>> out;
  const Components cc = connected_components(mask, Connectivity::Eight);
  for (int id = 1; id <= cc.count; ++id) {
    out.push_back(compress_collinear(trace_outer_contour(component_mask(cc, id))));
  }
  return out;
}

}  // namespace vidanno
