#include "vidanno/media.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <functional>
#include <system_error>

#include "vidanno/colormap.hpp"

namespace fs = std::filesystem;

namespace vidanno {
namespace {

cv::Mat wrap(Image& image) {
  return cv::Mat(image.height(), image.width(), CV_8UC3, image.bytes().data());
}

Image from_bgr(const cv::Mat& bgr) {
  Image out(bgr.cols, bgr.rows);
  cv::Mat dst = wrap(out);
  if (bgr.channels() == 3) {
    cv::cvtColor(bgr, dst, cv::COLOR_BGR2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, dst, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, dst, cv::COLOR_GRAY2RGB);
  }
  return out;
}

cv::Mat to_bgr(const Image& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3,
              const_cast<std::uint8_t*>(image.bytes().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

bool is_image_file(const fs::path& p) {
  static const std::array<std::string, 7> exts = {".png", ".jpg", ".jpeg", ".bmp",
                                                  ".tif", ".tiff", ".webp"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(exts.begin(), exts.end(), e) != exts.end();
}

}  // namespace

ResidentFrame::ResidentFrame(Image image, ResidencyCounter* counter)
    : image_(std::move(image)), counter_(counter) {
  if (counter_) counter_->acquire();
}

ResidentFrame::ResidentFrame(ResidentFrame&& other) noexcept
    : image_(std::move(other.image_)), counter_(std::exchange(other.counter_, nullptr)) {}

ResidentFrame& ResidentFrame::operator=(ResidentFrame&& other) noexcept {
  if (this != &other) {
    if (counter_) counter_->release();
    image_ = std::move(other.image_);
    counter_ = std::exchange(other.counter_, nullptr);
  }
  return *this;
}

ResidentFrame::~ResidentFrame() {
  if (counter_) counter_->release();
}

Image read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) fail(ErrorKind::Io, "cannot decode image " + path.string());
  return from_bgr(m);
}

void write_png(const fs::path& path, const Image& image) {
  if (!cv::imwrite(path.string(), to_bgr(image))) {
    fail(ErrorKind::Io, "cannot write " + path.string());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_bgr(image), buf)) fail(ErrorKind::Io, "png encoding failed");
  return buf;
}

std::string frame_file_name(FrameIndex t) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.png", t);
  return name;
}

// ---------------------------------------------------------------------------
// Sources

struct MediaPipeline::Source {
  virtual ~Source() = default;
  /// Decodes frames [first, last] in order, handing each to `sink`.
  virtual void decode(FrameIndex first, FrameIndex last,
                      const std::function<void(FrameIndex, cv::Mat&)>& sink) = 0;
};

namespace {

class ImageDirSource : public MediaPipeline::Source {
 public:
  explicit ImageDirSource(std::vector<fs::path> files) : files_(std::move(files)) {}

  void decode(FrameIndex first, FrameIndex last,
              const std::function<void(FrameIndex, cv::Mat&)>& sink) override {
    for (FrameIndex t = first; t <= last; ++t) {
      const auto& f = files_[static_cast<std::size_t>(t)];
      cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
      if (m.empty()) fail(ErrorKind::Io, "cannot decode frame " + std::to_string(t));
      sink(t, m);
    }
  }

 private:
  std::vector<fs::path> files_;
};

class VideoSource : public MediaPipeline::Source {
 public:
  explicit VideoSource(fs::path path) : path_(std::move(path)) {}

  void decode(FrameIndex first, FrameIndex last,
              const std::function<void(FrameIndex, cv::Mat&)>& sink) override {
    cv::VideoCapture cap(path_.string());
    if (!cap.isOpened()) fail(ErrorKind::Io, "cannot open video " + path_.string());
    // Decode from the start and discard; seeking is inexact for many codecs.
    cv::Mat m;
    for (FrameIndex t = 0; t <= last; ++t) {
      if (t < first) {
        if (!cap.grab()) fail(ErrorKind::Io, "cannot decode frame " + std::to_string(t));
        continue;
      }
      if (!cap.read(m) || m.empty()) {
        fail(ErrorKind::Io, "cannot decode frame " + std::to_string(t));
      }
      sink(t, m);
    }
  }

 private:
  fs::path path_;
};

}  // namespace

MediaPipeline::MediaPipeline(fs::path workdir, ResidencyCounter* counter)
    : workdir_(std::move(workdir)), counter_(counter) {}

MediaPipeline::~MediaPipeline() = default;

void MediaPipeline::clear_workdir() {
  std::error_code ec;
  fs::remove_all(workdir_ / "blocks", ec);
  fs::create_directories(workdir_ / "blocks", ec);
  if (ec) fail(ErrorKind::Io, "cannot prepare working directory " + workdir_.string());
}

void MediaPipeline::load(const fs::path& source, int block_size) {
  if (block_size < 1) fail(ErrorKind::Domain, "block size must be >= 1");
  std::error_code ec;
  if (!fs::exists(source, ec)) fail(ErrorKind::Io, "media not found: " + source.string());

  MediaInfo info;
  info.source = source;
  std::unique_ptr<Source> src;

  if (fs::is_directory(source)) {
    info.kind = MediaKind::ImageDir;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(source)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (files.empty()) fail(ErrorKind::Io, "no images in " + source.string());
    for (std::size_t i = 0; i < files.size(); ++i) {
      cv::Mat m = cv::imread(files[i].string(), cv::IMREAD_COLOR);
      if (m.empty()) fail(ErrorKind::Io, "cannot decode " + files[i].string());
      ResidentFrame probe(Image{}, counter_);
      if (i == 0) {
        info.width = m.cols;
        info.height = m.rows;
      } else if (m.cols != info.width || m.rows != info.height) {
        fail(ErrorKind::Format, "mixed resolutions in image directory: " +
                                    files[i].filename().string());
      }
    }
    info.frames = static_cast<int>(files.size());
    src = std::make_unique<ImageDirSource>(std::move(files));
  } else {
    info.kind = MediaKind::Video;
    cv::VideoCapture cap(source.string());
    if (!cap.isOpened()) fail(ErrorKind::Io, "cannot open video " + source.string());
    const double fps = cap.get(cv::CAP_PROP_FPS);
    if (fps > 0) info.fps = fps;
    cv::Mat m;
    int frames = 0;
    while (cap.read(m) && !m.empty()) {
      ResidentFrame probe(Image{}, counter_);
      if (frames == 0) {
        info.width = m.cols;
        info.height = m.rows;
      }
      ++frames;
    }
    if (frames == 0) fail(ErrorKind::Io, "video has no decodable frames: " + source.string());
    info.frames = frames;
    src = std::make_unique<VideoSource>(source);
  }

  std::lock_guard lock(mutex_);
  plan_ = BlockPlan(info.frames, block_size);
  info_ = std::move(info);
  source_ = std::move(src);
  materialized_.assign(static_cast<std::size_t>(plan_.block_count()), false);
  clear_workdir();
}

fs::path MediaPipeline::block_dir(int b) const { return workdir_ / "blocks" / std::to_string(b); }

fs::path MediaPipeline::materialize_block(int b) {
  if (!loaded()) fail(ErrorKind::State, "no media loaded");
  const FrameRange range = plan_.block(b);
  std::lock_guard lock(mutex_);
  const fs::path dir = block_dir(b);
  if (materialized_[static_cast<std::size_t>(b)]) return dir;
  fs::create_directories(dir);
  const FrameIndex last = plan_.lookahead(b).value_or(range.end);
  source_->decode(range.start, last, [&](FrameIndex t, cv::Mat& bgr) {
    ResidentFrame resident(Image{}, counter_);
    const fs::path out = dir / frame_file_name(t);
    if (!cv::imwrite(out.string(), bgr)) fail(ErrorKind::Io, "cannot write " + out.string());
  });
  materialized_[static_cast<std::size_t>(b)] = true;
  return dir;
}

fs::path MediaPipeline::frame_path(FrameIndex t) {
  if (!loaded()) fail(ErrorKind::State, "no media loaded");
  const int b = plan_.block_of(t);
  return materialize_block(b) / frame_file_name(t);
}

fs::path MediaPipeline::lookahead_path(int b) {
  const auto t = plan_.lookahead(b);
  if (!t) fail(ErrorKind::Domain, "final block has no lookahead frame");
  return materialize_block(b) / frame_file_name(*t);
}

ResidentFrame MediaPipeline::read_frame(FrameIndex t) {
  const fs::path p = frame_path(t);
  cv::Mat m = cv::imread(p.string(), cv::IMREAD_COLOR);
  if (m.empty()) fail(ErrorKind::Io, "cannot decode frame " + std::to_string(t));
  return ResidentFrame(from_bgr(m), counter_);
}

// ---------------------------------------------------------------------------
// Rendering

std::optional<ViewMode> parse_view_mode(const std::string& s) {
  if (s == "original") return ViewMode::Original;
  if (s == "prompts") return ViewMode::Prompts;
  if (s == "overlay") return ViewMode::Overlay;
  if (s == "masks") return ViewMode::Masks;
  return std::nullopt;
}

std::string to_string(ViewMode mode) {
  switch (mode) {
    case ViewMode::Original: return "original";
    case ViewMode::Prompts: return "prompts";
    case ViewMode::Overlay: return "overlay";
    case ViewMode::Masks: return "masks";
  }
  return "original";
}

Image render_overlay(const Image& frame, const LabelMap& composite) {
  if (frame.width() != composite.width() || frame.height() != composite.height()) {
    fail(ErrorKind::Format, "overlay dimensions differ from frame");
  }
  Image out = frame;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const int id = composite(x, y);
      if (id == kBackgroundIndex) continue;
      const Rgb c = colormap_entry(id);
      const Rgb p = out.get(x, y);
      out.set(x, y, {blend_half(p.r, c.r), blend_half(p.g, c.g), blend_half(p.b, c.b)});
    }
  }
  return out;
}

Image render_label_colors(const LabelMap& composite) {
  Image out(composite.width(), composite.height());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out.set(x, y, colormap_entry(composite(x, y)));
  }
  return out;
}

Image render_prompts(const Image& frame, const std::vector<Prompt>& prompts,
                     const LabelRegistry& labels) {
  Image out = frame;
  cv::Mat canvas = wrap(out);
  const int radius = std::max(2, std::min(frame.width(), frame.height()) / 100);
  for (const Prompt& p : prompts) {
    if (const auto* pt = p.point()) {
      const cv::Scalar color = pt->sign == PromptSign::Positive ? cv::Scalar(0, 255, 0)
                                                                 : cv::Scalar(255, 0, 0);
      cv::circle(canvas, {pt->at.x, pt->at.y}, radius, color, cv::FILLED, cv::LINE_8);
    } else if (const auto* bx = p.box()) {
      const Rgb c = labels.contains(p.label) ? labels.get(p.label).color : Rgb{255, 255, 0};
      cv::rectangle(canvas, cv::Point(bx->corner_a.x, bx->corner_a.y),
                    cv::Point(bx->corner_b.x, bx->corner_b.y), cv::Scalar(c.r, c.g, c.b), 1,
                    cv::LINE_8);
    }
  }
  return out;
}

void draw_label_names(Image& image,
                      const std::vector<std::pair<std::string, Centroid>>& names) {
  cv::Mat canvas = wrap(image);
  for (const auto& [name, c] : names) {
    const cv::Point at(static_cast<int>(c.x), static_cast<int>(c.y));
    cv::putText(canvas, name, at, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 3);
    cv::putText(canvas, name, at, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(255, 255, 255), 1);
  }
}

// ---------------------------------------------------------------------------
// Cache

std::shared_ptr<const Image> OverlayCache::get(FrameIndex frame, ViewMode mode,
                                               std::uint64_t version) {
  std::lock_guard lock(mutex_);
  auto it = index_.find({frame, static_cast<int>(mode), version});
  if (it == index_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->second;
}

void OverlayCache::put(FrameIndex frame, ViewMode mode, std::uint64_t version,
                       std::shared_ptr<const Image> image) {
  if (capacity_ == 0) return;
  std::lock_guard lock(mutex_);
  const Key key{frame, static_cast<int>(mode), version};
  if (auto it = index_.find(key); it != index_.end()) {
    it->second->second = std::move(image);
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.emplace_front(key, std::move(image));
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
}

void OverlayCache::clear() {
  std::lock_guard lock(mutex_);
  lru_.clear();
  index_.clear();
}

std::size_t OverlayCache::size() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

}  // namespace vidanno
