#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vidanno/raster.hpp"

namespace vidanno::synth {

struct SceneConfig {
  int frames = 300;
  int width = 320;
  int height = 240;
  int blobs = 3;
  int radius = 14;
  int max_step = 6;   // per-frame displacement bound (Euclidean)
  int noise = 3;      // uniform per-channel noise amplitude
  std::uint32_t seed = 1;
};

// Disks of distinct colors drifting over a dark background. Blobs bounce off
// the borders and never overlap: a move that would bring two disks closer
// than a small gap is replaced by standing still and reversing direction.
struct Scene {
  SceneConfig config;
  std::vector<Rgb> colors;                  // per blob; label id = index + 1
  std::vector<std::vector<Pixel>> centers;  // [frame][blob]

  Image frame(int t) const;
  LabelMap ground_truth(int t) const;
  Bitmap blob_mask(int t, int blob) const;
};

Scene make_scene(const SceneConfig& config);

/// Writes frame_%06d.png frames to `frames_dir` and palette ground truth
/// of the same names to `gt_dir`.
void write_scene(const Scene& scene, const std::filesystem::path& frames_dir,
                 const std::filesystem::path& gt_dir);

}  // namespace vidanno::synth
