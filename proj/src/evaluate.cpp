#include "vidanno/evaluate.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>

#include "vidanno/png_io.hpp"

namespace fs = std::filesystem;

namespace vidanno::metrics {

namespace {

constexpr int kIds = 256;

std::vector<std::string> png_names(const fs::path& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string num(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::optional<Matching> parse_matching(const std::string& s) {
  if (s == "identity") return Matching::Identity;
  if (s == "greedy") return Matching::Greedy;
  return std::nullopt;
}

void SequenceEvaluator::add_frame(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt, "evaluate");
  std::vector<std::uint64_t> dense(static_cast<std::size_t>(kIds) * kIds, 0);
  auto p = pred.pixels();
  auto g = gt.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) ++dense[static_cast<std::size_t>(p[i]) * kIds + g[i]];
  Frame f;
  for (std::size_t k = 0; k < dense.size(); ++k) {
    if (dense[k]) f.joint[{static_cast<int>(k / kIds), static_cast<int>(k % kIds)}] = dense[k];
  }
  f.pixels = p.size();
  frames_.push_back(std::move(f));
}

ReportRow SequenceEvaluator::finish(const std::string& name, Matching matching) const {
  if (frames_.empty()) fail(ErrorKind::Domain, "sequence '" + name + "' has no common frames");

  // Per-frame areas and the set of ids that ever appear.
  const std::size_t n = frames_.size();
  std::vector<std::array<std::uint64_t, kIds>> pred_area(n), gt_area(n);
  std::set<int> pred_ids, gt_ids;
  for (std::size_t t = 0; t < n; ++t) {
    pred_area[t].fill(0);
    gt_area[t].fill(0);
    for (const auto& [key, c] : frames_[t].joint) {
      pred_area[t][static_cast<std::size_t>(key.first)] += c;
      gt_area[t][static_cast<std::size_t>(key.second)] += c;
    }
    for (int id = 1; id < kIds; ++id) {
      if (pred_area[t][id]) pred_ids.insert(id);
      if (gt_area[t][id]) gt_ids.insert(id);
    }
  }

  auto cell = [&](std::size_t t, int p, int g) -> std::uint64_t {
    auto it = frames_[t].joint.find({p, g});
    return it == frames_[t].joint.end() ? 0 : it->second;
  };

  // Scores of pairing pred id p (0 = nothing) with gt id g (0 = nothing)
  // over the frames where either side is present.
  struct PairScore {
    double iou_sum = 0, dice_sum = 0;
    int count = 0;
  };
  auto score = [&](int p, int g) {
    PairScore s;
    for (std::size_t t = 0; t < n; ++t) {
      Overlap o;
      o.a = p ? pred_area[t][p] : 0;
      o.b = g ? gt_area[t][g] : 0;
      o.intersection = p && g ? cell(t, p, g) : 0;
      if (o.a == 0 && o.b == 0) continue;
      s.iou_sum += iou(o);
      s.dice_sum += dice(o);
      ++s.count;
    }
    return s;
  };

  std::map<int, int> match;  // pred id -> gt id
  if (matching == Matching::Identity) {
    for (int id : pred_ids) {
      if (gt_ids.contains(id)) match[id] = id;
    }
  } else {
    struct Cand {
      double mean;
      int p, g;
    };
    std::vector<Cand> cands;
    for (int p : pred_ids) {
      for (int g : gt_ids) {
        const PairScore s = score(p, g);
        if (s.count > 0 && s.iou_sum > 0) cands.push_back({s.iou_sum / s.count, p, g});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.mean != b.mean) return a.mean > b.mean;
      return std::pair(a.g, a.p) < std::pair(b.g, b.p);
    });
    std::set<int> used_gt;
    for (const Cand& c : cands) {
      if (match.contains(c.p) || used_gt.contains(c.g)) continue;
      match[c.p] = c.g;
      used_gt.insert(c.g);
    }
  }

  PairScore total;
  auto accumulate = [&](const PairScore& s) {
    total.iou_sum += s.iou_sum;
    total.dice_sum += s.dice_sum;
    total.count += s.count;
  };
  std::set<int> matched_gt;
  for (const auto& [p, g] : match) {
    accumulate(score(p, g));
    matched_gt.insert(g);
  }
  for (int g : gt_ids) {
    if (!matched_gt.contains(g)) accumulate(score(0, g));
  }
  for (int p : pred_ids) {
    if (!match.contains(p)) accumulate(score(p, 0));
  }

  double acc_sum = 0;
  for (std::size_t t = 0; t < n; ++t) {
    std::uint64_t equal = cell(t, 0, 0);
    for (const auto& [p, g] : match) equal += cell(t, p, g);
    acc_sum += frames_[t].pixels ? static_cast<double>(equal) / static_cast<double>(frames_[t].pixels) : 1.0;
  }

  ReportRow row;
  row.sequence = name;
  row.frames = static_cast<double>(n);
  row.instances = static_cast<double>(gt_ids.size());
  row.all_masks = total.count;
  row.mean_iou = total.count ? total.iou_sum / total.count : 1.0;
  row.mean_dice = total.count ? total.dice_sum / total.count : 1.0;
  row.pixel_acc = acc_sum / static_cast<double>(n);
  return row;
}

ReportRow evaluate_sequence(const fs::path& pred_dir, const fs::path& gt_dir, Matching matching,
                            const std::string& name) {
  const auto gt_names = png_names(gt_dir);
  const auto pred_names = png_names(pred_dir);
  std::vector<std::string> common;
  std::set_intersection(gt_names.begin(), gt_names.end(), pred_names.begin(), pred_names.end(),
                        std::back_inserter(common));
  const std::string seq = name.empty() ? gt_dir.filename().string() : name;
  if (common.empty()) fail(ErrorKind::Domain, "no common frames between " + pred_dir.string() + " and " + gt_dir.string());
  SequenceEvaluator ev;
  for (const auto& f : common) ev.add_frame(read_label_png(pred_dir / f), read_label_png(gt_dir / f));
  return ev.finish(seq, matching);
}

std::vector<ReportRow> evaluate_report(const fs::path& pred_root, const fs::path& gt_root,
                                       Matching matching) {
  std::vector<std::string> sequences;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(gt_root, ec)) {
    if (e.is_directory()) sequences.push_back(e.path().filename().string());
  }
  if (ec) fail(ErrorKind::Io, "cannot read " + gt_root.string());
  if (sequences.empty()) return {evaluate_sequence(pred_root, gt_root, matching)};

  std::sort(sequences.begin(), sequences.end());
  std::vector<ReportRow> rows;
  for (const auto& s : sequences) rows.push_back(evaluate_sequence(pred_root / s, gt_root / s, matching, s));
  const ReportRow avg = average_row(rows);
  const ReportRow sd = stddev_row(rows);
  rows.push_back(avg);
  rows.push_back(sd);
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& c : report_columns()) out += (out.empty() ? "" : ",") + c;
  out += '\n';
  for (const ReportRow& r : rows) {
    const char* count_fmt = r.has_instances ? "%.0f" : "%.2f";
    out += r.sequence + ',' + num(r.frames, count_fmt) + ',' +
           (r.has_instances ? num(r.instances, "%.0f") : std::string()) + ',' +
           num(r.all_masks, count_fmt) + ',' + num(r.mean_iou, "%.6f") + ',' +
           num(r.mean_dice, "%.6f") + ',' + num(r.pixel_acc, "%.6f") + '\n';
  }
  return out;
}

}  // namespace vidanno::metrics
