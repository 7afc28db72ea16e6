#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidanno/block_plan.hpp"
#include "vidanno/timeline.hpp"

namespace vidanno {

enum class PropagationMode { Forward, Backward, All, Singular };

std::optional<PropagationMode> parse_mode(const std::string& s);
std::string to_string(PropagationMode mode);

/// Prompts handed to the backend for one label in one pass.
struct LabelAnchor {
  LabelId label = 0;
  FrameIndex anchor = 0;      // frame s the prompts were placed on
  FrameIndex applied_at = 0;  // frame they are given to the backend on
  bool clipped = false;       // anchor lay behind a barrier
  std::vector<Prompt> prompts;  // all points plus the first box
};

struct PassPlan {
  Direction direction = Direction::Forward;
  FrameRange writable;
  std::vector<FrameIndex> frames;  // presentation order; may end with the lookahead
  std::optional<FrameIndex> lookahead;
  std::vector<LabelAnchor> anchors;
  std::vector<std::string> warnings;

  int position_of(FrameIndex t) const;
};

/// Points of P_l(s) plus only the primary (first) box.
std::vector<Prompt> backend_prompts(const std::vector<Prompt>& prompt_set);

/// Passes for a job, in execution order. Forward passes run last so they own
/// t_curr in mode all. Throws State when t_curr is a checkpoint and
/// Precondition when no label has an anchor.
std::vector<PassPlan> plan_passes(PropagationMode mode, FrameIndex t_curr, const BlockPlan& plan,
                                  const TimelineLog& log);

enum class JobStatus { Running, Done, Cancelled, Failed };
std::string to_string(JobStatus status);

struct JobInfo {
  std::uint64_t id = 0;
  PropagationMode mode = PropagationMode::Forward;
  FrameIndex t_curr = 0;
  FrameRange block;
  JobStatus status = JobStatus::Running;
  int frames_done = 0;
  int frames_total = 0;
  FrameIndex current_frame = -1;
  int auto_prompts_added = 0;
  std::vector<std::string> warnings;
  std::string error;

  double progress() const {
    if (status == JobStatus::Done) return 1.0;
    if (frames_total <= 0) return 0.0;
    // Only a finished job reports completion.
    return std::min(0.999999, static_cast<double>(frames_done) / frames_total);
  }
  bool finished() const noexcept { return status != JobStatus::Running; }
};

}  // namespace vidanno
