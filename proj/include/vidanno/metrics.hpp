#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidanno/raster.hpp"

namespace vidanno::metrics {

struct Overlap {
  std::uint64_t intersection = 0;
  std::uint64_t a = 0;
  std::uint64_t b = 0;

  std::uint64_t unite() const noexcept { return a + b - intersection; }
};

inline Overlap overlap(const Bitmap& a, const Bitmap& b) {
  require_same_shape(a, b, "overlap");
  Overlap o;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const bool x = pa[i] != 0, y = pb[i] != 0;
    o.a += x;
    o.b += y;
    o.intersection += x && y;
  }
  return o;
}

// Both-empty pairs agree vacuously and score 1.
inline double iou(const Overlap& o) {
  const auto u = o.unite();
  return u == 0 ? 1.0 : static_cast<double>(o.intersection) / static_cast<double>(u);
}

inline double dice(const Overlap& o) {
  const auto s = o.a + o.b;
  return s == 0 ? 1.0 : 2.0 * static_cast<double>(o.intersection) / static_cast<double>(s);
}

inline double iou(const Bitmap& a, const Bitmap& b) { return iou(overlap(a, b)); }
inline double dice(const Bitmap& a, const Bitmap& b) { return dice(overlap(a, b)); }

/// Fraction of pixels carrying the same label id, background included.
inline double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt, "pixel_accuracy");
  if (pred.size() == 0) return 1.0;
  std::uint64_t equal = 0;
  auto p = pred.pixels();
  auto g = gt.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) equal += p[i] == g[i];
  return static_cast<double>(equal) / static_cast<double>(p.size());
}

/// Binary mask of one label in a label map.
inline Bitmap label_mask(const LabelMap& map, int label) {
  Bitmap m(map.width(), map.height(), 0);
  auto src = map.pixels();
  auto dst = m.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == label ? 1 : 0;
  return m;
}

/// One row of the per-sequence report.
struct ReportRow {
  std::string sequence;
  double frames = 0;
  double instances = 0;  // absent for aggregate rows
  double all_masks = 0;
  double mean_iou = 0;
  double mean_dice = 0;
  double pixel_acc = 0;
  bool has_instances = true;
};

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {"sequence", "frames",    "instances", "all_masks",
                                                "mean_iou", "mean_dice", "pixel_acc"};
  return cols;
}

/// Arithmetic mean of each column across sequences.
inline ReportRow average_row(const std::vector<ReportRow>& rows) {
  ReportRow avg{"Average"};
  avg.has_instances = false;
  if (rows.empty()) return avg;
  for (const auto& r : rows) {
    avg.frames += r.frames;
    avg.all_masks += r.all_masks;
    avg.mean_iou += r.mean_iou;
    avg.mean_dice += r.mean_dice;
    avg.pixel_acc += r.pixel_acc;
  }
  const double n = static_cast<double>(rows.size());
  avg.frames /= n;
  avg.all_masks /= n;
  avg.mean_iou /= n;
  avg.mean_dice /= n;
  avg.pixel_acc /= n;
  return avg;
}

/// Sample (n-1) standard deviation of each column; zero for fewer than 2 rows.
inline ReportRow stddev_row(const std::vector<ReportRow>& rows) {
  ReportRow sd{"Std dev."};
  sd.has_instances = false;
  if (rows.size() < 2) return sd;
  const ReportRow mean = average_row(rows);
  for (const auto& r : rows) {
    sd.frames += (r.frames - mean.frames) * (r.frames - mean.frames);
    sd.all_masks += (r.all_masks - mean.all_masks) * (r.all_masks - mean.all_masks);
    sd.mean_iou += (r.mean_iou - mean.mean_iou) * (r.mean_iou - mean.mean_iou);
    sd.mean_dice += (r.mean_dice - mean.mean_dice) * (r.mean_dice - mean.mean_dice);
    sd.pixel_acc += (r.pixel_acc - mean.pixel_acc) * (r.pixel_acc - mean.pixel_acc);
  }
  const double d = static_cast<double>(rows.size() - 1);
  sd.frames = std::sqrt(sd.frames / d);
  sd.all_masks = std::sqrt(sd.all_masks / d);
  sd.mean_iou = std::sqrt(sd.mean_iou / d);
  sd.mean_dice = std::sqrt(sd.mean_dice / d);
  sd.pixel_acc = std::sqrt(sd.pixel_acc / d);
  return sd;
}

}  // namespace vidanno::metrics
