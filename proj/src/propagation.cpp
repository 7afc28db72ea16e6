#include "vidanno/propagation.hpp"

#include <algorithm>

namespace vidanno {

std::optional<PropagationMode> parse_mode(const std::string& s) {
  if (s == "forward") return PropagationMode::Forward;
  if (s == "backward") return PropagationMode::Backward;
  if (s == "all") return PropagationMode::All;
  if (s == "singular") return PropagationMode::Singular;
  return std::nullopt;
}

std::string to_string(PropagationMode mode) {
  switch (mode) {
    case PropagationMode::Forward: return "forward";
    case PropagationMode::Backward: return "backward";
    case PropagationMode::All: return "all";
    case PropagationMode::Singular: return "singular";
  }
  return "forward";
}

std::string to_string(JobStatus status) {
  switch (status) {
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Cancelled: return "cancelled";
    case JobStatus::Failed: return "failed";
  }
  return "failed";
}

int PassPlan::position_of(FrameIndex t) const {
  auto it = std::find(frames.begin(), frames.end(), t);
  return it == frames.end() ? -1 : static_cast<int>(it - frames.begin());
}

std::vector<Prompt> backend_prompts(const std::vector<Prompt>& prompt_set) {
  std::vector<Prompt> out;
  bool have_box = false;
  for (const Prompt& p : prompt_set) {
    if (p.is_box()) {
      if (have_box) continue;
      have_box = true;
    }
    out.push_back(p);
  }
  return out;
}

namespace {

std::vector<LabelAnchor> collect_anchors(PropagationMode mode, FrameIndex t, FrameRange block,
                                         FrameIndex segment_start, FrameIndex reapply_at,
                                         const TimelineLog& log,
                                         std::vector<std::string>& warnings) {
  std::vector<LabelAnchor> anchors;
  for (LabelId label : log.prompted_labels()) {
    LabelAnchor a;
    a.label = label;
    if (mode == PropagationMode::Singular) {
      if (!log.has_prompts_at(label, t)) continue;
      a.anchor = t;
      a.prompts = backend_prompts(log.prompts_at(label, t));
    } else {
      auto active = log.active_prompts(label, t, block);
      if (!active) continue;
      a.anchor = active->anchor;
      a.prompts = backend_prompts(active->prompts);
    }
    a.applied_at = a.anchor;
    if (a.anchor < segment_start) {
      a.clipped = true;
      a.applied_at = reapply_at;
      warnings.push_back("label " + std::to_string(label) + ": prompts from frame " +
                         std::to_string(a.anchor) + " lie behind a checkpoint; re-applied at frame " +
                         std::to_string(reapply_at));
    }
    anchors.push_back(std::move(a));
  }
  return anchors;
}

PassPlan forward_pass(FrameIndex t, const BlockPlan& plan, const TimelineLog& log,
                      PropagationMode mode) {
  const int b = plan.block_of(t);
  const FrameRange block = plan.block(b);
  const auto& cps = log.checkpoints();
  PassPlan pass;
  pass.direction = Direction::Forward;
  pass.writable = clamp_range(t, Direction::Forward, block, cps);
  const FrameIndex segment_start = clamp_range(t, Direction::Backward, block, cps).start;
  pass.anchors = collect_anchors(mode, t, block, segment_start, segment_start, log, pass.warnings);
  if (pass.anchors.empty()) return pass;

  FrameIndex first = t;
  for (const auto& a : pass.anchors) first = std::min(first, a.applied_at);
  for (FrameIndex f = first; f <= pass.writable.end; ++f) pass.frames.push_back(f);
  if (pass.writable.end == block.end) {
    if (auto la = plan.lookahead(b)) {
      pass.lookahead = la;
      pass.frames.push_back(*la);
    }
  }
  return pass;
}

PassPlan backward_pass(FrameIndex t, const BlockPlan& plan, const TimelineLog& log) {
  const FrameRange block = plan.block(plan.block_of(t));
  PassPlan pass;
  pass.direction = Direction::Backward;
  pass.writable = clamp_range(t, Direction::Backward, block, log.checkpoints());
  pass.anchors = collect_anchors(PropagationMode::Backward, t, block, pass.writable.start, t, log,
                                 pass.warnings);
  if (pass.anchors.empty()) return pass;
  for (FrameIndex f = t; f >= pass.writable.start; --f) pass.frames.push_back(f);
  return pass;
}

}  // namespace

std::vector<PassPlan> plan_passes(PropagationMode mode, FrameIndex t_curr, const BlockPlan& plan,
                                  const TimelineLog& log) {
  if (t_curr < 0 || t_curr >= plan.frame_count()) {
    fail(ErrorKind::Domain, "t_curr out of range: " + std::to_string(t_curr));
  }
  if (log.is_checkpoint(t_curr)) {
    fail(ErrorKind::State, "frame " + std::to_string(t_curr) + " is a checkpoint and write-locked");
  }
  std::vector<PassPlan> passes;
  switch (mode) {
    case PropagationMode::Forward:
      passes.push_back(forward_pass(t_curr, plan, log, mode));
      break;
    case PropagationMode::Backward:
      passes.push_back(backward_pass(t_curr, plan, log));
      break;
    case PropagationMode::All:
      passes.push_back(backward_pass(t_curr, plan, log));
      passes.push_back(forward_pass(t_curr, plan, log, mode));
      break;
    case PropagationMode::Singular: {
      PassPlan pass;
      pass.direction = Direction::Forward;
      pass.writable = {t_curr, t_curr};
      const FrameRange block = plan.block(plan.block_of(t_curr));
      pass.anchors = collect_anchors(mode, t_curr, block, t_curr, t_curr, log, pass.warnings);
      if (!pass.anchors.empty()) pass.frames = {t_curr};
      passes.push_back(std::move(pass));
      break;
    }
  }
  std::erase_if(passes, [](const PassPlan& p) { return p.anchors.empty(); });
  if (passes.empty()) {
    fail(ErrorKind::Precondition,
         mode == PropagationMode::Singular
             ? "no prompts on frame " + std::to_string(t_curr)
             : "no label has prompts at or before frame " + std::to_string(t_curr) +
                   " in this block");
  }
  return passes;
}

}  // namespace vidanno
