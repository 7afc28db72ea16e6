#include <gtest/gtest.h>

#include <random>

#include "vidanno/evaluate.hpp"
#include "vidanno/png_io.hpp"
#include "expect_error.hpp"
#include "temp_dir.hpp"

using namespace vidanno;
using namespace vidanno::metrics;
namespace fs = std::filesystem;

namespace {

std::string name_of(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%04d.png", t);
  return buf;
}

LabelMap disk_map(int w, int h, int cx, int cy, int r, std::uint8_t id) {
  LabelMap m(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = id;
    }
  }
  return m;
}

void write_seq(const fs::path& dir, const std::vector<LabelMap>& maps) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < maps.size(); ++t) write_indexed_png(dir / name_of(static_cast<int>(t)), maps[t]);
}

LabelMap relabel(LabelMap m, std::uint8_t from, std::uint8_t to) {
  for (auto& v : m.pixels()) {
    if (v == from) v = to;
    else if (v == to) v = from;
  }
  return m;
}

}  // namespace

TEST(Evaluate, CopyScoresOne) {
  TempDir d;
  std::vector<LabelMap> gt;
  for (int t = 0; t < 90; ++t) gt.push_back(disk_map(40, 30, 10 + t % 20, 15, 5, 1));
  write_seq(d.path() / "gt", gt);
  write_seq(d.path() / "pred", gt);
  const ReportRow r = evaluate_sequence(d.path() / "pred", d.path() / "gt", Matching::Identity);
  EXPECT_EQ(r.frames, 90);
  EXPECT_EQ(r.instances, 1);
  EXPECT_EQ(r.all_masks, 90);
  EXPECT_EQ(r.mean_iou, 1.0);
  EXPECT_EQ(r.mean_dice, 1.0);
  EXPECT_EQ(r.pixel_acc, 1.0);
  EXPECT_EQ(r.sequence, "gt");
}

TEST(Evaluate, AbsentInBothIsNotCounted) {
  TempDir d;
  std::vector<LabelMap> gt, pred;
  for (int t = 0; t < 10; ++t) {
    LabelMap m = disk_map(40, 30, 10, 10, 4, 1);
    if (t < 6) {
      for (int y = 20; y < 25; ++y) m(30, y) = 2;
    }
    gt.push_back(m);
    pred.push_back(t == 0 ? LabelMap(40, 30, 0) : m);
  }
  write_seq(d.path() / "gt", gt);
  write_seq(d.path() / "pred", pred);
  const ReportRow r = evaluate_sequence(d.path() / "pred", d.path() / "gt", Matching::Identity);
  EXPECT_EQ(r.instances, 2);
  EXPECT_EQ(r.all_masks, 16);
  EXPECT_DOUBLE_EQ(r.mean_iou, 14.0 / 16.0);
}

TEST(Evaluate, GreedyRecoversPermutedIds) {
  TempDir d;
  std::vector<LabelMap> gt, pred;
  for (int t = 0; t < 12; ++t) {
    LabelMap m = disk_map(50, 40, 10 + t, 12, 5, 1);
    const LabelMap other = disk_map(50, 40, 35, 28 - t, 5, 2);
    for (std::size_t i = 0; i < m.pixels().size(); ++i) {
      if (other.pixels()[i]) m.pixels()[i] = 2;
    }
    gt.push_back(m);
    pred.push_back(relabel(m, 1, 2));
  }
  write_seq(d.path() / "gt", gt);
  write_seq(d.path() / "pred", pred);
  const ReportRow id = evaluate_sequence(d.path() / "pred", d.path() / "gt", Matching::Identity);
  EXPECT_EQ(id.mean_iou, 0.0);
  EXPECT_LT(id.pixel_acc, 1.0);
  const ReportRow gr = evaluate_sequence(d.path() / "pred", d.path() / "gt", Matching::Greedy);
  EXPECT_EQ(gr.mean_iou, 1.0);
  EXPECT_EQ(gr.pixel_acc, 1.0);
  EXPECT_EQ(gr.all_masks, 24);
}

TEST(Evaluate, MatchesBruteForceOnRandomMaps) {
  std::mt19937 rng(9);
  std::uniform_int_distribution<int> id(0, 3);
  SequenceEvaluator ev;
  double iou_sum = 0, dice_sum = 0, acc_sum = 0;
  int count = 0;
  for (int t = 0; t < 20; ++t) {
    LabelMap p(9, 7), g(9, 7);
    for (auto& v : p.pixels()) v = static_cast<std::uint8_t>(id(rng) == 0 ? id(rng) : 0);
    for (auto& v : g.pixels()) v = static_cast<std::uint8_t>(id(rng) == 0 ? id(rng) : 0);
    ev.add_frame(p, g);
    int equal = 0;
    for (std::size_t i = 0; i < p.pixels().size(); ++i) equal += p.pixels()[i] == g.pixels()[i];
    acc_sum += equal / 63.0;
    for (int l = 1; l <= 3; ++l) {
      int inter = 0, a = 0, b = 0;
      for (std::size_t i = 0; i < p.pixels().size(); ++i) {
        a += p.pixels()[i] == l;
        b += g.pixels()[i] == l;
        inter += p.pixels()[i] == l && g.pixels()[i] == l;
      }
      if (a + b == 0) continue;
      iou_sum += static_cast<double>(inter) / (a + b - inter);
      dice_sum += 2.0 * inter / (a + b);
      ++count;
    }
  }
  const ReportRow r = ev.finish("rand", Matching::Identity);
  EXPECT_EQ(r.all_masks, count);
  EXPECT_NEAR(r.mean_iou, iou_sum / count, 1e-12);
  EXPECT_NEAR(r.mean_dice, dice_sum / count, 1e-12);
  EXPECT_NEAR(r.pixel_acc, acc_sum / 20, 1e-12);
}

TEST(Evaluate, Errors) {
  TempDir d;
  write_seq(d.path() / "gt", {LabelMap(4, 4, 0)});
  fs::create_directories(d.path() / "empty");
  EXPECT_EQ(error_kind([&] { evaluate_sequence(d.path() / "empty", d.path() / "gt", Matching::Identity); }),
            ErrorKind::Domain);
  write_seq(d.path() / "small", {LabelMap(3, 4, 0)});
  EXPECT_EQ(error_kind([&] { evaluate_sequence(d.path() / "small", d.path() / "gt", Matching::Identity); }),
            ErrorKind::Format);
  EXPECT_FALSE(parse_matching("hungarian"));
}

TEST(Evaluate, MultiSequenceReport) {
  TempDir d;
  for (int s = 0; s < 3; ++s) {
    std::vector<LabelMap> gt, pred;
    for (int t = 0; t < 5 + s; ++t) {
      gt.push_back(disk_map(30, 30, 15, 15, 6, 1));
      pred.push_back(disk_map(30, 30, 15 + s, 15, 6, 1));
    }
    write_seq(d.path() / "gt" / ("seq" + std::to_string(s)), gt);
    write_seq(d.path() / "pred" / ("seq" + std::to_string(s)), pred);
  }
  const auto rows = evaluate_report(d.path() / "pred", d.path() / "gt", Matching::Identity);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[3].sequence, "Average");
  EXPECT_EQ(rows[4].sequence, "Std dev.");
  EXPECT_DOUBLE_EQ(rows[3].frames, 6.0);
  EXPECT_DOUBLE_EQ(rows[4].frames, 1.0);
  const std::string csv = report_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sequence,frames,instances,all_masks,mean_iou,mean_dice,pixel_acc");
  EXPECT_NE(csv.find("\nseq0,5,1,5,1.000000,1.000000,1.000000\n"), std::string::npos);
  EXPECT_NE(csv.find("\nAverage,6.00,,6.00,"), std::string::npos);
}
