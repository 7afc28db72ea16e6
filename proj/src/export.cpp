#include "vidanno/export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vidanno/contour.hpp"
#include "vidanno/png_io.hpp"

namespace fs = std::filesystem;

namespace vidanno {
namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

std::string yolo_name(FrameIndex t) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.txt", t);
  return name;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> yolo_lines(const InstanceMask& mask, std::vector<std::string>& warnings) {
  std::vector<std::string> lines;
  const double w = mask.bitmap.width(), h = mask.bitmap.height();
  for (const auto& poly : outer_polygons(mask.bitmap)) {
    if (poly.size() < 3) {
      warnings.push_back("frame " + std::to_string(mask.frame) + " label " +
                         std::to_string(mask.label) + ": degenerate region with " +
                         std::to_string(poly.size()) + " contour vertices skipped");
      continue;
    }
    std::string line = std::to_string(mask.label - 1);
    for (const Pixel& p : poly) {
      line += ' ';
      line += fixed6(p.x / w);
      line += ' ';
      line += fixed6(p.y / h);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string prompts_csv(const SessionData& data) {
  std::string out = "frame,label_id,kind,sign,coords,origin\n";
  for (const Prompt& p : data.log.all_prompts()) {
    out += std::to_string(p.frame) + ',' + std::to_string(p.label) + ',';
    if (const auto* pt = p.point()) {
      out += "point,";
      out += pt->sign == PromptSign::Positive ? "positive," : "negative,";
      out += std::to_string(pt->at.x) + ' ' + std::to_string(pt->at.y);
    } else if (const auto* bx = p.box()) {
      out += "box,positive,";
      out += std::to_string(bx->corner_a.x) + ' ' + std::to_string(bx->corner_a.y) + ' ' +
             std::to_string(bx->corner_b.x) + ' ' + std::to_string(bx->corner_b.y);
    }
    out += p.origin == PromptOrigin::Human ? ",human\n" : ",auto\n";
  }
  return out;
}

std::string centroids_csv(const SessionData& data) {
  std::string out = "frame,label_id,cx,cy,source\n";
  for (const InstanceMask* m : data.masks.all()) {
    const auto c = centroid(m->bitmap);
    if (!c) continue;
    out += std::to_string(m->frame) + ',' + std::to_string(m->label) + ',' + fixed6(c->x) + ',' +
           fixed6(c->y) + ',' + (m->source == MaskSource::Prompted ? "prompted" : "propagated") +
           '\n';
  }
  return out;
}

std::string labels_csv(const LabelRegistry& labels) {
  std::string out = "label_id,label_name,r,g,b\n";
  for (const Label& l : labels.all()) {
    out += std::to_string(l.id) + ',' + csv_field(l.name) + ',' + std::to_string(l.color.r) + ',' +
           std::to_string(l.color.g) + ',' + std::to_string(l.color.b) + '\n';
  }
  return out;
}

ExportReport export_session(const SessionData& data, const fs::path& out_root,
                            const std::vector<ExportKind>& kinds, const RawFrameFn& raw_frame) {
  ExportReport report;
  report.directory = out_root / data.session_id;
  auto wants = [&](ExportKind k) { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };
  const std::vector<FrameIndex> frames = data.masks.annotated_frames();
  if ((wants(ExportKind::Png) || wants(ExportKind::Yolo)) && frames.empty()) {
    fail(ErrorKind::Precondition, "no annotated frames to export");
  }
  std::error_code ec;
  fs::create_directories(report.directory, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + report.directory.string());

  if (wants(ExportKind::Png)) {
    const fs::path images = report.directory / "images";
    const fs::path masks = report.directory / "masks";
    fs::create_directories(images);
    fs::create_directories(masks);
    for (FrameIndex t : frames) {
      const fs::path img = images / frame_file_name(t);
      fs::copy_file(raw_frame(t), img, fs::copy_options::overwrite_existing, ec);
      if (ec) fail(ErrorKind::Io, "cannot copy frame " + std::to_string(t) + ": " + ec.message());
      report.files.push_back(img);
      const fs::path m = masks / frame_file_name(t);
      write_indexed_png(m, data.masks.composite(t));
      report.files.push_back(m);
    }
  }

  if (wants(ExportKind::Yolo)) {
    const fs::path dir = report.directory / "yolo";
    fs::create_directories(dir);
    for (FrameIndex t : frames) {
      std::string text;
      for (const InstanceMask* m : data.masks.at(t)) {
        for (const auto& line : yolo_lines(*m, report.warnings)) text += line + '\n';
      }
      const fs::path f = dir / yolo_name(t);
      write_text(f, text);
      report.files.push_back(f);
    }
  }

  if (wants(ExportKind::Tabular)) {
    const std::pair<const char*, std::string> tables[] = {
        {"prompts.csv", prompts_csv(data)},
        {"centroids.csv", centroids_csv(data)},
        {"labels.csv", labels_csv(data.labels)}};
    for (const auto& [name, text] : tables) {
      write_text(report.directory / name, text);
      report.files.push_back(report.directory / name);
    }
  }
  return report;
}

}  // namespace vidanno
