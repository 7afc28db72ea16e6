#pragma once

// JSON shapes shared by the HTTP service and the event stream.

#include <json.hpp>

#include "vidanno/monitor.hpp"
#include "vidanno/session.hpp"

namespace vidanno::codec {

using json = nlohmann::json;

inline json job_json(const JobInfo& j) {
  json out{{"job_id", j.id},
           {"mode", to_string(j.mode)},
           {"t_curr", j.t_curr},
           {"block", {j.block.start, j.block.end}},
           {"status", to_string(j.status)},
           {"frames_done", j.frames_done},
           {"frames_total", j.frames_total},
           {"current_frame", j.current_frame},
           {"progress", j.progress()},
           {"auto_prompts_added", j.auto_prompts_added},
           {"warnings", j.warnings}};
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

inline json media_json(const MediaInfo& m, const BlockPlan& plan) {
  json blocks = json::array();
  for (const FrameRange& r : plan.blocks()) blocks.push_back({r.start, r.end});
  return {{"source", m.source.string()},
          {"kind", m.kind == MediaKind::Video ? "video" : "image_dir"},
          {"frames", m.frames},
          {"width", m.width},
          {"height", m.height},
          {"fps", m.fps ? json(*m.fps) : json(nullptr)},
          {"block_size", plan.block_size()},
          {"blocks", blocks}};
}

inline json label_json(const Label& l) {
  return {{"id", l.id}, {"name", l.name}, {"color", {l.color.r, l.color.g, l.color.b}}};
}

inline json prompt_json(const Prompt& p) {
  json out{{"id", p.id},
           {"frame", p.frame},
           {"label_id", p.label},
           {"origin", p.origin == PromptOrigin::Human ? "human" : "auto"}};
  if (const auto* pt = p.point()) {
    out["kind"] = "point";
    out["point"] = {pt->at.x, pt->at.y};
    out["sign"] = pt->sign == PromptSign::Positive ? "positive" : "negative";
  } else if (const auto* bx = p.box()) {
    out["kind"] = "box";
    out["box"] = {bx->corner_a.x, bx->corner_a.y, bx->corner_b.x, bx->corner_b.y};
    out["sign"] = "positive";
  }
  return out;
}

inline json settings_json(const SessionSettings& s) {
  return {{"auto_prompt", s.auto_prompt},     {"show_label_names", s.show_label_names},
          {"cache_enabled", s.cache_enabled}, {"view_mode", to_string(s.view_mode)},
          {"active_label", s.active_label},   {"cursor", s.cursor}};
}

inline json flags_json(const FrameFlags& f) {
  return {{"frame", f.frame},
          {"has_user_prompt", f.has_user_prompt},
          {"has_prompt_for_active_label", f.has_prompt_for_active_label},
          {"has_mask", f.has_mask},
          {"has_mask_for_active_label", f.has_mask_for_active_label},
          {"is_checkpoint", f.is_checkpoint},
          {"is_cursor", f.is_cursor}};
}

inline json sample_json(const ResourceSample& s) {
  return {{"timestamp", iso8601(s.timestamp)},
          {"cpu_pct", s.cpu_pct},
          {"rss_mib", s.rss_mib},
          {"gpu_util_pct", s.gpu_util_pct ? json(*s.gpu_util_pct) : json(nullptr)},
          {"vram_mib", s.vram_mib ? json(*s.vram_mib) : json(nullptr)}};
}

}  // namespace vidanno::codec
