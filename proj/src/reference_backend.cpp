#include <cmath>
#include <limits>
#include <vector>

#include "vidanno/backend.hpp"
#include "vidanno/components.hpp"
#include "vidanno/mask_store.hpp"
#include "vidanno/media.hpp"

namespace vidanno {

Bitmap flood_similar(const Image& frame, Pixel seed, Rgb key, int tolerance) {
  Bitmap out(frame.width(), frame.height(), 0);
  if (seed.x < 0 || seed.y < 0 || seed.x >= frame.width() || seed.y >= frame.height()) {
    return out;
  }
  if (channel_distance(frame.get(seed.x, seed.y), key) > tolerance) return out;
  std::vector<Pixel> stack{seed};
  out(seed.x, seed.y) = 1;
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};
  while (!stack.empty()) {
    const Pixel p = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) {
      const int x = p.x + dx[k], y = p.y + dy[k];
      if (!out.contains(x, y) || out(x, y)) continue;
      if (channel_distance(frame.get(x, y), key) > tolerance) continue;
      out(x, y) = 1;
      stack.push_back({x, y});
    }
  }
  return out;
}

Bitmap chroma_key_segment(const Image& frame, const std::vector<Pixel>& seeds,
                          const std::vector<Pixel>& negatives, int tolerance) {
  Bitmap mask(frame.width(), frame.height(), 0);
  for (const Pixel& s : seeds) {
    if (!mask.contains(s.x, s.y) || mask(s.x, s.y)) continue;
    const Bitmap region = flood_similar(frame, s, frame.get(s.x, s.y), tolerance);
    auto dst = mask.pixels();
    auto src = region.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] |= src[i];
  }
  if (negatives.empty()) return mask;
  const Components comps = connected_components(mask, Connectivity::Four);
  for (const Pixel& n : negatives) {
    if (!mask.contains(n.x, n.y)) continue;
    const int id = comps.labels(n.x, n.y);
    if (id == 0) continue;
    auto lab = comps.labels.pixels();
    auto dst = mask.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (lab[i] == id) dst[i] = 0;
    }
  }
  return mask;
}

std::optional<Pixel> find_reseed(const Image& frame, double from_x, double from_y, Rgb key,
                                 int tolerance, int radius) {
  std::optional<Pixel> best;
  double best_d = std::numeric_limits<double>::max();
  const int x0 = std::max(0, static_cast<int>(std::floor(from_x - radius)));
  const int x1 = std::min(frame.width() - 1, static_cast<int>(std::ceil(from_x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(from_y - radius)));
  const int y1 = std::min(frame.height() - 1, static_cast<int>(std::ceil(from_y + radius)));
  const double r2 = static_cast<double>(radius) * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = (x - from_x) * (x - from_x) + (y - from_y) * (y - from_y);
      if (d > r2 || d >= best_d) continue;  // strict: raster order breaks ties
      if (channel_distance(frame.get(x, y), key) > tolerance) continue;
      best_d = d;
      best = Pixel{x, y};
    }
  }
  return best;
}

ReferenceBackend::State& ReferenceBackend::state(const std::string& id) {
  auto it = states_.find(id);
  if (it == states_.end()) fail(ErrorKind::NotFound, "unknown state_id " + id);
  return it->second;
}

void ReferenceBackend::init_state(const std::string& state_id,
                                  const std::vector<std::filesystem::path>& frames) {
  std::lock_guard lock(mutex_);
  if (states_.contains(state_id)) fail(ErrorKind::Conflict, "state_id in use: " + state_id);
  if (frames.empty()) fail(ErrorKind::Domain, "init_state needs at least one frame");
  states_[state_id] = State{frames, {}};
}

void ReferenceBackend::add_prompts(const std::string& state_id, const PromptBundle& prompts) {
  std::lock_guard lock(mutex_);
  State& st = state(state_id);
  if (prompts.frame_pos < 0 || prompts.frame_pos >= static_cast<int>(st.frames.size())) {
    fail(ErrorKind::Domain, "frame_pos out of range");
  }
  auto& slot = st.prompts[prompts.label][prompts.frame_pos];
  slot.frame_pos = prompts.frame_pos;
  slot.label = prompts.label;
  slot.points.insert(slot.points.end(), prompts.points.begin(), prompts.points.end());
  if (!slot.box) slot.box = prompts.box;  // only the first box counts
}

void ReferenceBackend::reset(const std::string& state_id) {
  std::lock_guard lock(mutex_);
  states_.erase(state_id);
}

void ReferenceBackend::propagate(const std::string& state_id, const MaskSink& sink) {
  State st;
  {
    std::lock_guard lock(mutex_);
    st = state(state_id);
  }

  struct Track {
    bool started = false;
    Bitmap mask;
    Rgb key;
  };
  std::map<LabelId, Track> tracks;
  for (const auto& [label, by_pos] : st.prompts) tracks[label];

  for (int pos = 0; pos < static_cast<int>(st.frames.size()); ++pos) {
    const ResidentFrame frame(read_image(st.frames[static_cast<std::size_t>(pos)]), residency_);
    const Image& img = frame.image();
    for (auto& [label, track] : tracks) {
      const auto& by_pos = st.prompts.at(label);
      if (auto it = by_pos.find(pos); it != by_pos.end()) {
        const PromptBundle& b = it->second;
        std::vector<Pixel> seeds, negatives;
        for (const SignedPoint& p : b.points) {
          (p.positive ? seeds : negatives).push_back({p.x, p.y});
        }
        if (b.box) {
          seeds.push_back({(b.box->corner_a.x + b.box->corner_b.x) / 2,
                           (b.box->corner_a.y + b.box->corner_b.y) / 2});
        }
        std::erase_if(seeds, [&](Pixel p) {
          return p.x < 0 || p.y < 0 || p.x >= img.width() || p.y >= img.height();
        });
        track.started = true;
        track.mask = chroma_key_segment(img, seeds, negatives, config_.tolerance);
        if (!seeds.empty()) track.key = img.get(seeds.front().x, seeds.front().y);
      } else if (track.started) {
        const auto c = centroid(track.mask);
        std::optional<Pixel> seed;
        if (c) seed = find_reseed(img, c->x, c->y, track.key, config_.tolerance,
                                  config_.search_radius);
        track.mask = seed ? flood_similar(img, *seed, img.get(seed->x, seed->y),
                                          config_.tolerance)
                          : Bitmap(img.width(), img.height(), 0);
      }
      if (!track.started) continue;
      if (!sink(MaskResult{pos, label, track.mask})) return;
    }
  }
}

}  // namespace vidanno
