#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <vector>

#include "vidanno/mask_store.hpp"

namespace vidanno {

struct AutoPromptConfig {
  int merge_radius = 3;  // Chebyshev
  int max_keypoints = 8;
};

namespace detail {

// Clockwise from north: P2..P9 in Zhang-Suen notation.
inline constexpr std::array<int, 8> kRingDx = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr std::array<int, 8> kRingDy = {-1, -1, 0, 1, 1, 1, 0, -1};

inline std::array<std::uint8_t, 8> ring(const Bitmap& img, int x, int y) {
  std::array<std::uint8_t, 8> p{};
  for (int i = 0; i < 8; ++i) {
    p[static_cast<std::size_t>(i)] = img.at_or(x + kRingDx[i], y + kRingDy[i], 0) ? 1 : 0;
  }
  return p;
}

inline bool zhang_suen_deletable(const Bitmap& img, int x, int y, int pass) {
  const auto p = ring(img, x, y);
  int b = 0;
  for (auto v : p) b += v;
  if (b < 2 || b > 6) return false;
  int a = 0;
  for (int i = 0; i < 8; ++i) a += (p[i] == 0 && p[(i + 1) % 8] == 1);
  if (a != 1) return false;
  const int n = p[0], e = p[2], s = p[4], w = p[6];
  if (pass == 0) return (n * e * s) == 0 && (e * s * w) == 0;
  return (n * e * w) == 0 && (n * s * w) == 0;
}

}  // namespace detail

/// Number of 8-neighbours set in `img` around (x, y).
inline int neighbour_count(const Bitmap& img, int x, int y) {
  int n = 0;
  for (int i = 0; i < 8; ++i) n += img.at_or(x + detail::kRingDx[i], y + detail::kRingDy[i], 0) ? 1 : 0;
  return n;
}

// Zhang-Suen thinning. Each sub-iteration marks candidates against the frozen
// image, then deletes them in raster order, re-testing each against the live
// image so two mutually dependent pixels cannot both vanish (this is what
// keeps 2-pixel-thick diagonals and 2x2 blocks connected).
inline Bitmap skeletonize(const Bitmap& mask) {
  Bitmap img = mask;
  for (auto& v : img.pixels()) v = v ? 1 : 0;
  std::vector<Pixel> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
          if (img(x, y) && detail::zhang_suen_deletable(img, x, y, pass)) marked.push_back({x, y});
        }
      }
      for (const Pixel& p : marked) {
        if (detail::zhang_suen_deletable(img, p.x, p.y, pass)) {
          img(p.x, p.y) = 0;
          changed = true;
        }
      }
    }
  }
  return img;
}

enum class KeypointKind { Endpoint, Junction, Isolated };

struct Keypoint {
  Pixel at;
  KeypointKind kind = KeypointKind::Endpoint;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Raw classification: 0 neighbours -> isolated, 1 -> endpoint, >= 3 -> junction.
/// Raster (y, x) order.
inline std::vector<Keypoint> classify_skeleton(const Bitmap& skeleton) {
  std::vector<Keypoint> out;
  for (int y = 0; y < skeleton.height(); ++y) {
    for (int x = 0; x < skeleton.width(); ++x) {
      if (!skeleton(x, y)) continue;
      const int n = neighbour_count(skeleton, x, y);
      if (n == 0) out.push_back({{x, y}, KeypointKind::Isolated});
      else if (n == 1) out.push_back({{x, y}, KeypointKind::Endpoint});
      else if (n >= 3) out.push_back({{x, y}, KeypointKind::Junction});
    }
  }
  return out;
}

inline int chebyshev(Pixel a, Pixel b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

/// Greedy merge in raster order: a candidate within `radius` (exclusive) of
/// an already kept one is absorbed by it.
inline std::vector<Keypoint> merge_keypoints(const std::vector<Keypoint>& raster_ordered,
                                             int radius) {
  std::vector<Keypoint> kept;
  for (const Keypoint& k : raster_ordered) {
    bool absorbed = false;
    for (const Keypoint& q : kept) {
      if (chebyshev(k.at, q.at) < radius) {
        absorbed = true;
        break;
      }
    }
    if (!absorbed) kept.push_back(k);
  }
  return kept;
}

/// Keeps at most `cap` points by greedy max-min (farthest point) selection,
/// seeded with the first point. Result is in raster order.
inline std::vector<Keypoint> cap_keypoints(const std::vector<Keypoint>& raster_ordered, int cap) {
  if (static_cast<int>(raster_ordered.size()) <= cap) return raster_ordered;
  const std::size_t n = raster_ordered.size();
  std::vector<bool> chosen(n, false);
  std::vector<long long> min_d2(n, std::numeric_limits<long long>::max());
  auto update = [&](std::size_t c) {
    chosen[c] = true;
    for (std::size_t i = 0; i < n; ++i) {
      const long long dx = raster_ordered[i].at.x - raster_ordered[c].at.x;
      const long long dy = raster_ordered[i].at.y - raster_ordered[c].at.y;
      min_d2[i] = std::min(min_d2[i], dx * dx + dy * dy);
    }
  };
  update(0);
  for (int k = 1; k < cap; ++k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!chosen[i] && (best == n || min_d2[i] > min_d2[best])) best = i;
    }
    update(best);
  }
  std::vector<Keypoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) out.push_back(raster_ordered[i]);
  }
  return out;
}

/// Endpoints and junctions of a skeleton after merging and capping. A skeleton
/// with none (a closed loop) yields its pixel nearest the skeleton centroid.
inline std::vector<Keypoint> skeleton_keypoints(const Bitmap& skeleton,
                                                const AutoPromptConfig& cfg = {}) {
  auto kps = cap_keypoints(merge_keypoints(classify_skeleton(skeleton), cfg.merge_radius),
                           cfg.max_keypoints);
  if (!kps.empty()) return kps;
  const auto c = centroid(skeleton);
  if (!c) return kps;
  Pixel best{-1, -1};
  double best_d = std::numeric_limits<double>::max();
  for (int y = 0; y < skeleton.height(); ++y) {
    for (int x = 0; x < skeleton.width(); ++x) {
      if (!skeleton(x, y)) continue;
      const double d = (x - c->x) * (x - c->x) + (y - c->y) * (y - c->y);
      if (d < best_d) {
        best_d = d;
        best = {x, y};
      }
    }
  }
  kps.push_back({best, KeypointKind::Junction});
  return kps;
}

/// Positive auto-origin point prompts for `label` at `target_frame`, one per
/// skeleton keypoint of `mask`. Tokens are assigned when logged.
inline std::vector<Prompt> prompts_from_mask(LabelId label, FrameIndex target_frame,
                                             const Bitmap& mask,
                                             const AutoPromptConfig& cfg = {}) {
  std::vector<Prompt> out;
  if (count_set(mask) == 0) return out;
  for (const Keypoint& k : skeleton_keypoints(skeletonize(mask), cfg)) {
    out.push_back(Prompt{0, target_frame, label, PromptOrigin::Auto,
                         PointShape{k.at, PromptSign::Positive}});
  }
  return out;
}

}  // namespace vidanno
