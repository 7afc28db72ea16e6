#include <gtest/gtest.h>

#include <random>
#include <set>

#include <json.hpp>

#include "vidanno/metrics.hpp"
#include "vidanno/propagation.hpp"
#include "barrier_oracle.hpp"
#include "expect_error.hpp"
#include "scene_fixture.hpp"

using namespace vidanno;

namespace {

class PlanTest : public ::testing::Test {
 protected:
  PlanTest() : log(MediaBounds{300, 64, 48}), plan(300, 100) {
    labels.create("a");
    labels.create("b");
  }
  Token point(FrameIndex f, LabelId l, Pixel p = {10, 10}) {
    return log.add_point(labels, f, l, p, PromptSign::Positive);
  }
  LabelRegistry labels;
  TimelineLog log;
  BlockPlan plan;
};

std::vector<FrameIndex> range(FrameIndex a, FrameIndex b) {
  std::vector<FrameIndex> out;
  if (a <= b) {
    for (FrameIndex f = a; f <= b; ++f) out.push_back(f);
  } else {
    for (FrameIndex f = a; f >= b; --f) out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_F(PlanTest, ForwardStopsBeforeCheckpoint) {
  point(20, 1);
  log.set_checkpoint(50);
  const auto passes = plan_passes(PropagationMode::Forward, 20, plan, log);
  ASSERT_EQ(passes.size(), 1u);
  EXPECT_EQ(passes[0].writable, (FrameRange{20, 49}));
  EXPECT_EQ(passes[0].frames, range(20, 49));
  EXPECT_FALSE(passes[0].lookahead);
}

TEST_F(PlanTest, ForwardStartsAtEarlierAnchor) {
  point(5, 1);
  const auto passes = plan_passes(PropagationMode::Forward, 20, plan, log);
  ASSERT_EQ(passes.size(), 1u);
  EXPECT_EQ(passes[0].writable, (FrameRange{20, 99}));
  EXPECT_EQ(passes[0].frames.front(), 5);
  EXPECT_EQ(passes[0].anchors[0].applied_at, 5);
  ASSERT_TRUE(passes[0].lookahead);
  EXPECT_EQ(*passes[0].lookahead, 100);
  EXPECT_EQ(passes[0].frames.back(), 100);
}

TEST_F(PlanTest, FinalBlockHasNoLookahead) {
  point(210, 1);
  const auto passes = plan_passes(PropagationMode::Forward, 210, plan, log);
  EXPECT_FALSE(passes[0].lookahead);
  EXPECT_EQ(passes[0].frames.back(), 299);
}

TEST_F(PlanTest, BackwardStopsAfterCheckpoint) {
  point(70, 1);
  log.set_checkpoint(50);
  const auto passes = plan_passes(PropagationMode::Backward, 70, plan, log);
  ASSERT_EQ(passes.size(), 1u);
  EXPECT_EQ(passes[0].writable, (FrameRange{51, 70}));
  EXPECT_EQ(passes[0].frames, range(70, 51));
}

TEST_F(PlanTest, AllRunsBackwardThenForward) {
  point(30, 1);
  const auto passes = plan_passes(PropagationMode::All, 30, plan, log);
  ASSERT_EQ(passes.size(), 2u);
  EXPECT_EQ(passes[0].direction, Direction::Backward);
  EXPECT_EQ(passes[0].writable, (FrameRange{0, 30}));
  EXPECT_EQ(passes[1].direction, Direction::Forward);
  EXPECT_EQ(passes[1].writable, (FrameRange{30, 99}));
}

TEST_F(PlanTest, SingularNeedsPromptsOnTheFrame) {
  point(8, 1);
  EXPECT_EQ(error_kind([&] { plan_passes(PropagationMode::Singular, 10, plan, log); }),
            ErrorKind::Precondition);
  point(10, 2);
  const auto passes = plan_passes(PropagationMode::Singular, 10, plan, log);
  ASSERT_EQ(passes.size(), 1u);
  EXPECT_EQ(passes[0].writable, (FrameRange{10, 10}));
  ASSERT_EQ(passes[0].anchors.size(), 1u);
  EXPECT_EQ(passes[0].anchors[0].label, 2);
}

TEST_F(PlanTest, CheckpointAtStartFrameIsStateError) {
  point(10, 1);
  log.set_checkpoint(10);
  EXPECT_EQ(error_kind([&] { plan_passes(PropagationMode::Forward, 10, plan, log); }),
            ErrorKind::State);
}

TEST_F(PlanTest, NoAnchorsIsPrecondition) {
  point(150, 1);  // other block
  EXPECT_EQ(error_kind([&] { plan_passes(PropagationMode::Forward, 20, plan, log); }),
            ErrorKind::Precondition);
}

TEST_F(PlanTest, LabelsWithoutAnchorAreSkipped) {
  point(10, 1);
  point(40, 2);
  const auto passes = plan_passes(PropagationMode::Forward, 20, plan, log);
  ASSERT_EQ(passes[0].anchors.size(), 1u);
  EXPECT_EQ(passes[0].anchors[0].label, 1);
}

TEST_F(PlanTest, AnchorBehindCheckpointIsReappliedWithWarning) {
  point(10, 1);
  log.set_checkpoint(15);
  const auto fwd = plan_passes(PropagationMode::Forward, 20, plan, log);
  ASSERT_EQ(fwd[0].anchors.size(), 1u);
  EXPECT_TRUE(fwd[0].anchors[0].clipped);
  EXPECT_EQ(fwd[0].anchors[0].applied_at, 16);
  EXPECT_EQ(fwd[0].writable, (FrameRange{20, 99}));
  EXPECT_EQ(fwd[0].frames.front(), 16);
  EXPECT_EQ(fwd[0].warnings.size(), 1u);

  const auto bwd = plan_passes(PropagationMode::Backward, 20, plan, log);
  EXPECT_TRUE(bwd[0].anchors[0].clipped);
  EXPECT_EQ(bwd[0].anchors[0].applied_at, 20);
  EXPECT_EQ(bwd[0].writable, (FrameRange{16, 20}));
}

TEST_F(PlanTest, OnlyFirstBoxReachesBackend) {
  log.add_box(labels, 10, 1, {0, 0}, {10, 10});
  log.add_box(labels, 10, 1, {20, 20}, {30, 30});
  for (int i = 0; i < 3; ++i) point(10, 1, {5 + i, 5});
  const auto passes = plan_passes(PropagationMode::Forward, 10, plan, log);
  const auto& prompts = passes[0].anchors[0].prompts;
  int boxes = 0, points = 0;
  for (const auto& p : prompts) (p.is_box() ? boxes : points)++;
  EXPECT_EQ(boxes, 1);
  EXPECT_EQ(points, 3);
  for (const auto& p : prompts) {
    if (p.is_box()) EXPECT_EQ(p.box()->corner_a, (Pixel{0, 0}));
  }
}

TEST(JobInfoTest, ProgressReachesOneOnlyWhenDone) {
  JobInfo j;
  j.frames_total = 10;
  j.frames_done = 10;
  EXPECT_LT(j.progress(), 1.0);
  j.status = JobStatus::Cancelled;
  EXPECT_LT(j.progress(), 1.0);
  j.status = JobStatus::Done;
  EXPECT_EQ(j.progress(), 1.0);
}

// ---------------------------------------------------------------------------
// Engine on the reference backend

namespace {

synth::SceneConfig small_scene(int frames, std::uint32_t seed = 3) {
  synth::SceneConfig c;
  c.frames = frames;
  c.width = 80;
  c.height = 60;
  c.blobs = 2;
  c.radius = 7;
  c.max_step = 3;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(EngineTest, ForwardWithCheckpointWritesExactRange) {
  SceneFixture fx(small_scene(100), 100);
  fx.prompt_all(20);
  fx.session->set_checkpoint(50);
  const JobInfo j = fx.run(PropagationMode::Forward, 20);
  EXPECT_EQ(j.status, JobStatus::Done) << j.error;
  const auto frames = fx.session->read([](const SessionData& d) { return d.masks.annotated_frames(); });
  EXPECT_EQ(frames, range(20, 49));
}

TEST(EngineTest, PropagatedMasksTrackBlobs) {
  SceneFixture fx(small_scene(40), 40);
  fx.prompt_all(0);
  ASSERT_EQ(fx.run(PropagationMode::Forward, 0).status, JobStatus::Done);
  fx.session->read([&](const SessionData& d) {
    for (int t = 0; t < 40; ++t) {
      for (int b = 0; b < 2; ++b) {
        const InstanceMask* m = d.masks.get(t, b + 1);
        if (!m) {
          ADD_FAILURE() << "missing mask at " << t;
          continue;
        }
        EXPECT_GE(metrics::iou(m->bitmap, fx.scene.blob_mask(t, b)), 0.99) << "t=" << t;
        EXPECT_EQ(m->source, t == 0 ? MaskSource::Prompted : MaskSource::Propagated);
      }
    }
    return 0;
  });
}

TEST(EngineTest, ModeAllForwardOwnsStartFrame) {
  SceneFixture fx(small_scene(60), 60);
  fx.prompt_all(30);
  ASSERT_EQ(fx.run(PropagationMode::All, 30).status, JobStatus::Done);
  const auto v = mask_versions(*fx.session);
  EXPECT_EQ(v.size(), 120u);
  std::uint64_t max_backward = 0;
  for (int t = 0; t < 30; ++t) max_backward = std::max(max_backward, v.at({t, 1}));
  EXPECT_GT(v.at({30, 1}), max_backward);
  EXPECT_LT(v.at({30, 1}), v.at({31, 1}));
}

TEST(EngineTest, SingularWritesOnlyStartFrame) {
  SceneFixture fx(small_scene(30), 30);
  fx.prompt_all(12);
  ASSERT_EQ(fx.run(PropagationMode::Singular, 12).status, JobStatus::Done);
  const auto frames = fx.session->read([](const SessionData& d) { return d.masks.annotated_frames(); });
  EXPECT_EQ(frames, std::vector<FrameIndex>{12});
  EXPECT_EQ(error_kind([&] { fx.session->start_job(PropagationMode::Singular, 14); }),
            ErrorKind::Precondition);
}

TEST(EngineTest, StaticSceneRepeatsAnchorMask) {
  auto cfg = small_scene(20);
  cfg.max_step = 0;
  cfg.noise = 0;
  SceneFixture fx(cfg, 20);
  fx.prompt_all(0);
  ASSERT_EQ(fx.run(PropagationMode::Forward, 0).status, JobStatus::Done);
  fx.session->read([](const SessionData& d) {
    for (int t = 1; t < 20; ++t) {
      EXPECT_EQ(d.masks.get(t, 1)->bitmap, d.masks.get(0, 1)->bitmap);
      EXPECT_EQ(d.masks.get(t, 2)->bitmap, d.masks.get(0, 2)->bitmap);
    }
    return 0;
  });
}

TEST(EngineTest, MutationsAreRefusedWhileRunning) {
  auto slow = std::make_shared<ThrottledBackend>(std::make_shared<ReferenceBackend>());
  slow->delay = std::chrono::milliseconds(5);
  SceneFixture fx(small_scene(60), 60, slow);
  fx.prompt_all(0);
  const auto id = fx.session->start_job(PropagationMode::Forward, 0);
  EXPECT_TRUE(fx.session->job_running());
  EXPECT_EQ(error_kind([&] { fx.session->add_point(5, 1, {3, 3}, PromptSign::Positive); }),
            ErrorKind::Busy);
  EXPECT_EQ(error_kind([&] { fx.session->set_checkpoint(5); }), ErrorKind::Busy);
  EXPECT_EQ(error_kind([&] { fx.session->start_job(PropagationMode::Forward, 0); }),
            ErrorKind::Busy);
  fx.session->wait_job(id);
  EXPECT_FALSE(fx.session->job_running());
  EXPECT_NO_THROW(fx.session->set_checkpoint(5));
}

TEST(EngineTest, CancelKeepsContiguousPrefix) {
  auto slow = std::make_shared<ThrottledBackend>(std::make_shared<ReferenceBackend>());
  slow->delay = std::chrono::milliseconds(4);
  SceneFixture fx(small_scene(100), 100, slow);
  fx.prompt_all(10);
  const auto id = fx.session->start_job(PropagationMode::Forward, 10);
  while (fx.session->job(id).frames_done < 8) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  fx.session->cancel_job(id);
  fx.session->wait_job(id);
  const JobInfo j = fx.session->job(id);
  EXPECT_EQ(j.status, JobStatus::Cancelled);
  EXPECT_LT(j.progress(), 1.0);
  const auto frames = fx.session->read([](const SessionData& d) { return d.masks.annotated_frames(); });
  ASSERT_FALSE(frames.empty());
  EXPECT_LT(frames.size(), 90u);
  EXPECT_EQ(frames, range(10, frames.back()));

  EXPECT_EQ(error_kind([&] { fx.session->cancel_job(id); }), ErrorKind::NotFound);
  slow->delay = std::chrono::milliseconds(0);
  EXPECT_EQ(fx.run(PropagationMode::Forward, 10).status, JobStatus::Done);
}

TEST(EngineTest, BackendFailureKeepsPartialResults) {
  auto flaky = std::make_shared<ThrottledBackend>(std::make_shared<ReferenceBackend>());
  flaky->fail_after = 2 * 15;  // two labels per frame
  SceneFixture fx(small_scene(40), 40, flaky);
  fx.prompt_all(0);
  const JobInfo j = fx.run(PropagationMode::Forward, 0);
  EXPECT_EQ(j.status, JobStatus::Failed);
  EXPECT_NE(j.error.find("connection lost"), std::string::npos);
  const auto frames = fx.session->read([](const SessionData& d) { return d.masks.annotated_frames(); });
  EXPECT_EQ(frames, range(0, 14));
  EXPECT_FALSE(fx.session->job_running());
}

TEST(EngineTest, ProgressEventsAreMonotone) {
  SceneFixture fx(small_scene(50), 50);
  fx.prompt_all(0);
  auto sub = fx.session->events().subscribe();
  const JobInfo j = fx.run(PropagationMode::All, 20);
  ASSERT_EQ(j.status, JobStatus::Done);
  double last = -1;
  bool saw_done = false;
  Event ev;
  while (sub->next(ev, std::chrono::milliseconds(0))) {
    if (ev.type != "job") continue;
    const auto doc = nlohmann::json::parse(ev.data);
    const double p = doc["progress"].get<double>();
    EXPECT_GE(p, last);
    last = p;
    if (p == 1.0) {
      EXPECT_EQ(doc["status"], "done");
      saw_done = true;
    }
  }
  EXPECT_TRUE(saw_done);
}

TEST(EngineTest, BlockTransitionPromptsFollowMovingBlob) {
  auto cfg = small_scene(40, 11);
  cfg.blobs = 1;
  cfg.max_step = 4;
  SceneFixture fx(cfg, 20);
  fx.prompt_all(0);
  const JobInfo j = fx.run(PropagationMode::Forward, 0);
  ASSERT_EQ(j.status, JobStatus::Done);
  EXPECT_GT(j.auto_prompts_added, 0);
  const Bitmap next = fx.scene.blob_mask(20, 0);
  fx.session->read([&](const SessionData& d) {
    const auto prompts = d.log.prompts_at(1, 20);
    EXPECT_EQ(static_cast<int>(prompts.size()), j.auto_prompts_added);
    for (const Prompt& p : prompts) {
      EXPECT_EQ(p.origin, PromptOrigin::Auto);
      EXPECT_TRUE(next(p.point()->at.x, p.point()->at.y));
    }
    EXPECT_FALSE(d.masks.has_mask(20));  // lookahead is never visible
    EXPECT_NE(d.masks.lookahead(20, 1), nullptr);
    return 0;
  });
  // Re-running replaces the auto prompts instead of stacking them.
  const JobInfo again = fx.run(PropagationMode::Forward, 0);
  fx.session->read([&](const SessionData& d) {
    EXPECT_EQ(static_cast<int>(d.log.prompts_at(1, 20).size()), again.auto_prompts_added);
    return 0;
  });
  // The next block now propagates from the auto prompts alone.
  EXPECT_EQ(fx.run(PropagationMode::Forward, 20).status, JobStatus::Done);
  fx.session->read([&](const SessionData& d) {
    for (int t = 20; t < 40; ++t) EXPECT_GE(metrics::iou(d.masks.get(t, 1)->bitmap, fx.scene.blob_mask(t, 0)), 0.99);
    return 0;
  });
}

TEST(EngineTest, BlockTransitionRespectsToggle) {
  SceneFixture fx(small_scene(40), 20);
  auto s = fx.session->settings();
  s.auto_prompt = false;
  fx.session->update_settings(s);
  fx.prompt_all(0);
  const JobInfo j = fx.run(PropagationMode::Forward, 0);
  EXPECT_EQ(j.auto_prompts_added, 0);
  fx.session->read([](const SessionData& d) {
    EXPECT_TRUE(d.log.prompts_at(1, 20).empty());
    return 0;
  });
}

TEST(EngineTest, BarrierFuzz) {
  SceneFixture fx(small_scene(120, 5), 40);
  std::mt19937 rng(77);
  const PropagationMode modes[] = {PropagationMode::Forward, PropagationMode::Backward,
                                   PropagationMode::All, PropagationMode::Singular};
  int jobs = 0;
  for (int seq = 0; seq < 25; ++seq) {
    fx.session->load_media(fx.frames_dir(), 40);
    for (int k = 0; k < 4; ++k) {
      const int t = std::uniform_int_distribution<int>(0, 119)(rng);
      const int b = std::uniform_int_distribution<int>(0, 1)(rng);
      fx.session->add_point(t, b + 1, fx.scene.centers[t][b], PromptSign::Positive);
    }
    for (int op = 0; op < 8; ++op) {
      const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
      const int t = std::uniform_int_distribution<int>(0, 119)(rng);
      const auto cps = fx.session->read([](const SessionData& d) { return d.log.checkpoints(); });
      if (kind == 0) {
        fx.session->set_checkpoint(t);
        continue;
      }
      if (kind == 1 && !cps.empty()) {
        auto it = cps.begin();
        std::advance(it, std::uniform_int_distribution<int>(0, static_cast<int>(cps.size()) - 1)(rng));
        fx.session->clear_checkpoint(*it);
        continue;
      }
      const PropagationMode mode = modes[std::uniform_int_distribution<int>(0, 3)(rng)];
      const auto before = mask_versions(*fx.session);
      std::uint64_t id = 0;
      try {
        id = fx.session->start_job(mode, t);
      } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::Precondition || e.kind() == ErrorKind::State);
        continue;
      }
      fx.session->wait_job(id);
      ASSERT_EQ(fx.session->job(id).status, JobStatus::Done);
      ++jobs;
      const auto allowed = oracle::allowed_frames(mode, t, FrameRange{t / 40 * 40, t / 40 * 40 + 39}, cps);
      const auto after = mask_versions(*fx.session);
      for (const auto& [key, version] : before) {
        if (allowed.contains(key.first)) continue;
        auto it = after.find(key);
        ASSERT_NE(it, after.end());
        EXPECT_EQ(it->second, version) << "frame " << key.first << " touched";
      }
      for (const auto& [key, version] : after) {
        if (!allowed.contains(key.first)) EXPECT_TRUE(before.contains(key));
      }
    }
  }
  EXPECT_GT(jobs, 20);
}
