#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vidanno/colormap.hpp"
#include "vidanno/mask_store.hpp"

namespace vidanno {
namespace {

Bitmap rect(int w, int h, int x0, int y0, int x1, int y1) {
  Bitmap m(w, h, 0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m(x, y) = 1;
  return m;
}

InstanceMask result(FrameIndex f, LabelId l, Bitmap b) {
  return InstanceMask{f, l, std::move(b), MaskSource::Propagated, 0};
}

TEST(MaskStore, CommitInsideWritableRange) {
  MaskStore store(8, 8);
  std::vector<InstanceMask> rs;
  for (int f = 20; f < 30; ++f) rs.push_back(result(f, 1, rect(8, 8, 0, 0, 1, 1)));
  const auto r = store.commit(std::move(rs), FrameRange{20, 49}, {50});
  EXPECT_EQ(r.committed, 10);
  EXPECT_EQ(r.rejected, 0);
}

TEST(MaskStore, CheckpointFrameRejected) {
  MaskStore store(8, 8);
  std::vector<InstanceMask> rs;
  rs.push_back(result(49, 1, rect(8, 8, 0, 0, 1, 1)));
  rs.push_back(result(50, 1, rect(8, 8, 0, 0, 1, 1)));
  rs.push_back(result(60, 1, rect(8, 8, 0, 0, 1, 1)));
  const auto r = store.commit(std::move(rs), FrameRange{20, 60}, {50});
  EXPECT_EQ(r.committed, 2);
  EXPECT_EQ(r.rejected, 1);
  EXPECT_FALSE(store.has_mask(50));
}

TEST(MaskStore, VersionStrictlyIncreases) {
  MaskStore store(4, 4);
  store.commit({result(1, 1, Bitmap(4, 4, 1))}, FrameRange{0, 9}, {});
  const auto v1 = store.get(1, 1)->version;
  store.commit({result(1, 1, Bitmap(4, 4, 0))}, FrameRange{0, 9}, {});
  EXPECT_GT(store.get(1, 1)->version, v1);
}

TEST(MaskStore, DimensionMismatchIsFormatError) {
  MaskStore store(4, 4);
  try {
    store.commit({result(1, 1, Bitmap(5, 4, 1))}, FrameRange{0, 9}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST(MaskStore, CompositeOverlapHighestLabelWins) {
  MaskStore store(6, 6);
  EXPECT_EQ(store.composite(0), LabelMap(6, 6, 0));
  store.commit({result(0, 1, rect(6, 6, 0, 0, 2, 2)), result(0, 3, rect(6, 6, 2, 2, 4, 4)),
                result(0, 2, rect(6, 6, 5, 5, 5, 5))},
               FrameRange{0, 0}, {});
  const LabelMap m = store.composite(0);
  EXPECT_EQ(m(0, 0), 1);
  EXPECT_EQ(m(2, 2), 3);
  EXPECT_EQ(m(4, 4), 3);
  EXPECT_EQ(m(5, 5), 2);
  EXPECT_EQ(m(5, 0), 0);
}

TEST(MaskStore, LookaheadNeverVisible) {
  MaskStore store(4, 4);
  store.commit_lookahead(InstanceMask{100, 1, Bitmap(4, 4, 1), MaskSource::Lookahead, 0});
  EXPECT_FALSE(store.has_mask(100));
  EXPECT_EQ(store.composite(100), LabelMap(4, 4, 0));
  EXPECT_NE(store.lookahead(100, 1), nullptr);
  EXPECT_TRUE(store.annotated_frames().empty());
  // Lookahead-tagged results cannot sneak in through commit.
  auto r = store.commit({InstanceMask{3, 1, Bitmap(4, 4, 1), MaskSource::Lookahead, 0}},
                        FrameRange{0, 9}, {});
  EXPECT_EQ(r.rejected, 1);
}

TEST(MaskStore, CheckpointImmutabilityUnderRandomCommits) {
  std::mt19937_64 rng(2);
  MaskStore store(8, 8);
  store.commit({result(10, 1, rect(8, 8, 1, 1, 3, 3))}, FrameRange{10, 10}, {});
  const Bitmap frozen = store.get(10, 1)->bitmap;
  const std::set<FrameIndex> cps{10};
  std::uniform_int_distribution<int> f(0, 20);
  for (int i = 0; i < 500; ++i) {
    const int a = f(rng), b = f(rng);
    std::vector<InstanceMask> rs;
    for (int k = 0; k < 5; ++k) rs.push_back(result(f(rng), 1, oracle::random_bitmap(rng, 8, 8, 0.5)));
    store.commit(std::move(rs), FrameRange{std::min(a, b), std::max(a, b)}, cps);
  }
  EXPECT_EQ(store.get(10, 1)->bitmap, frozen);
}

TEST(MaskStore, CompositeColormapRoundTrip) {
  std::mt19937_64 rng(4);
  MaskStore store(10, 10);
  std::vector<InstanceMask> rs;
  for (int l = 1; l <= 5; ++l) rs.push_back(result(0, l, oracle::random_bitmap(rng, 10, 10, 0.3)));
  store.commit(std::move(rs), FrameRange{0, 0}, {});
  const LabelMap map = store.composite(0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) EXPECT_EQ(colormap_index(colormap_entry(map(x, y))), map(x, y));
}

TEST(Centroid, Examples) {
  EXPECT_FALSE(centroid(Bitmap(4, 4, 0)));
  auto c = centroid(rect(4, 4, 0, 0, 1, 1));
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->x, 0.5);
  EXPECT_DOUBLE_EQ(c->y, 0.5);
  Bitmap one(8, 8, 0);
  one(3, 4) = 1;
  c = centroid(one);
  EXPECT_DOUBLE_EQ(c->x, 3.0);
  EXPECT_DOUBLE_EQ(c->y, 4.0);
}

TEST(Centroid, MatchesBruteForceAndLiesInBoundingBox) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const Bitmap m = oracle::random_blob(rng, 40, 30);
    long double sx = 0, sy = 0;
    long n = 0;
    int minx = 1 << 30, maxx = -1, miny = 1 << 30, maxy = -1;
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 40; ++x)
        if (m(x, y)) {
          sx += x;
          sy += y;
          ++n;
          minx = std::min(minx, x);
          maxx = std::max(maxx, x);
          miny = std::min(miny, y);
          maxy = std::max(maxy, y);
        }
    auto c = centroid(m);
    ASSERT_TRUE(c);
    EXPECT_NEAR(c->x, static_cast<double>(sx / n), 1e-9);
    EXPECT_NEAR(c->y, static_cast<double>(sy / n), 1e-9);
    EXPECT_GE(c->x, minx);
    EXPECT_LE(c->x, maxx);
    EXPECT_GE(c->y, miny);
    EXPECT_LE(c->y, maxy);
  }
}

}  // namespace
}  // namespace vidanno
