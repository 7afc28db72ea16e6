#include "vidanno/synth.hpp"

#include <algorithm>
#include <array>
#include <random>

#include "vidanno/error.hpp"
#include "vidanno/media.hpp"
#include "vidanno/png_io.hpp"

namespace vidanno::synth {
namespace {

constexpr std::array<Rgb, 8> kPalette = {{{220, 50, 50},
                                          {50, 200, 70},
                                          {60, 90, 235},
                                          {235, 210, 40},
                                          {200, 60, 210},
                                          {40, 210, 215},
                                          {240, 140, 30},
                                          {240, 240, 240}}};
constexpr Rgb kBackground{24, 24, 28};
constexpr int kGap = 4;

long long dist2(Pixel a, Pixel b) {
  const long long dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

Scene make_scene(const SceneConfig& cfg) {
  if (cfg.frames < 1 || cfg.blobs < 1 || cfg.blobs > static_cast<int>(kPalette.size())) {
    fail(ErrorKind::Domain, "scene needs >= 1 frame and 1..8 blobs");
  }
  const int r = cfg.radius;
  const int min_sep = 2 * r + kGap;
  if (cfg.width < 2 * r + 2 || cfg.height < 2 * r + 2) fail(ErrorKind::Domain, "scene too small");

  Scene scene;
  scene.config = cfg;
  scene.colors.assign(kPalette.begin(), kPalette.begin() + cfg.blobs);

  std::mt19937 rng(cfg.seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  // Initial placement: rejection sampling with the separation constraint.
  std::vector<Pixel> pos;
  for (int b = 0; b < cfg.blobs; ++b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) fail(ErrorKind::Domain, "cannot place blobs without overlap");
      const Pixel p{uniform(r, cfg.width - 1 - r), uniform(r, cfg.height - 1 - r)};
      const bool clear = std::all_of(pos.begin(), pos.end(), [&](Pixel q) {
        return dist2(p, q) >= static_cast<long long>(min_sep) * min_sep;
      });
      if (clear) {
        pos.push_back(p);
        break;
      }
    }
  }
  std::vector<Pixel> vel;
  for (int b = 0; b < cfg.blobs; ++b) {
    Pixel v{0, 0};
    if (cfg.max_step > 0) {
      do {
        v = {uniform(-cfg.max_step, cfg.max_step), uniform(-cfg.max_step, cfg.max_step)};
      } while (dist2(v, {0, 0}) > static_cast<long long>(cfg.max_step) * cfg.max_step ||
               dist2(v, {0, 0}) < 4);
    }
    vel.push_back(v);
  }

  scene.centers.push_back(pos);
  for (int t = 1; t < cfg.frames; ++t) {
    for (int b = 0; b < cfg.blobs; ++b) {
      Pixel& v = vel[static_cast<std::size_t>(b)];
      Pixel next{pos[b].x + v.x, pos[b].y + v.y};
      if (next.x < r || next.x > cfg.width - 1 - r) {
        v.x = -v.x;
        next.x = pos[b].x + v.x;
      }
      if (next.y < r || next.y > cfg.height - 1 - r) {
        v.y = -v.y;
        next.y = pos[b].y + v.y;
      }
      next.x = std::clamp(next.x, r, cfg.width - 1 - r);
      next.y = std::clamp(next.y, r, cfg.height - 1 - r);
      bool collides = false;
      for (int o = 0; o < cfg.blobs; ++o) {
        if (o != b && dist2(next, pos[o]) < static_cast<long long>(min_sep) * min_sep) {
          collides = true;
        }
      }
      if (collides) {
        v = {-v.x, -v.y};
      } else {
        pos[b] = next;
      }
    }
    scene.centers.push_back(pos);
  }
  return scene;
}

Bitmap Scene::blob_mask(int t, int blob) const {
  Bitmap m(config.width, config.height, 0);
  const Pixel c = centers.at(static_cast<std::size_t>(t)).at(static_cast<std::size_t>(blob));
  const long long r2 = static_cast<long long>(config.radius) * config.radius;
  for (int y = std::max(0, c.y - config.radius); y <= std::min(config.height - 1, c.y + config.radius); ++y) {
    for (int x = std::max(0, c.x - config.radius); x <= std::min(config.width - 1, c.x + config.radius); ++x) {
      if (dist2({x, y}, c) <= r2) m(x, y) = 1;
    }
  }
  return m;
}

LabelMap Scene::ground_truth(int t) const {
  LabelMap map(config.width, config.height, 0);
  for (int b = 0; b < config.blobs; ++b) {
    const Bitmap m = blob_mask(t, b);
    auto src = m.pixels();
    auto dst = map.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i]) dst[i] = static_cast<std::uint8_t>(b + 1);
    }
  }
  return map;
}

Image Scene::frame(int t) const {
  const LabelMap gt = ground_truth(t);
  Image img(config.width, config.height);
  std::mt19937 rng(config.seed * 7919u + static_cast<std::uint32_t>(t));
  std::uniform_int_distribution<int> jitter(-config.noise, config.noise);
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      const int id = gt(x, y);
      const Rgb base = id == 0 ? kBackground : colors[static_cast<std::size_t>(id - 1)];
      img.set(x, y, {clamp8(base.r + jitter(rng)), clamp8(base.g + jitter(rng)),
                     clamp8(base.b + jitter(rng))});
    }
  }
  return img;
}

void write_scene(const Scene& scene, const std::filesystem::path& frames_dir,
                 const std::filesystem::path& gt_dir) {
  std::filesystem::create_directories(frames_dir);
  std::filesystem::create_directories(gt_dir);
  for (int t = 0; t < scene.config.frames; ++t) {
    write_png(frames_dir / frame_file_name(t), scene.frame(t));
    write_indexed_png(gt_dir / frame_file_name(t), scene.ground_truth(t));
  }
}

}  // namespace vidanno::synth
