#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vidanno/labels.hpp"

namespace vidanno {

using FrameIndex = int;
using Token = std::uint64_t;

/// Inclusive frame interval.
struct FrameRange {
  FrameIndex start = 0;
  FrameIndex end = -1;

  bool empty() const noexcept { return end < start; }
  int length() const noexcept { return empty() ? 0 : end - start + 1; }
  bool contains(FrameIndex t) const noexcept { return t >= start && t <= end; }

  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct MediaBounds {
  int frames = 0;
  int width = 0;
  int height = 0;

  bool contains_frame(FrameIndex t) const noexcept { return t >= 0 && t < frames; }
  bool contains_pixel(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  friend bool operator==(const MediaBounds&, const MediaBounds&) = default;
};

enum class PromptSign { Positive, Negative };
enum class PromptOrigin { Human, Auto };

struct PointShape {
  Pixel at;
  PromptSign sign = PromptSign::Positive;
  friend bool operator==(const PointShape&, const PointShape&) = default;
};

// Boxes are positive-only.
struct BoxShape {
  Pixel corner_a;
  Pixel corner_b;
  friend bool operator==(const BoxShape&, const BoxShape&) = default;
};

struct Prompt {
  Token id = 0;
  FrameIndex frame = 0;
  LabelId label = 0;
  PromptOrigin origin = PromptOrigin::Human;
  std::variant<PointShape, BoxShape> shape;

  bool is_box() const noexcept { return std::holds_alternative<BoxShape>(shape); }
  const PointShape* point() const noexcept { return std::get_if<PointShape>(&shape); }
  const BoxShape* box() const noexcept { return std::get_if<BoxShape>(&shape); }

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct FeatureEdit {
  Token id = 0;
  std::string feature;
  LabelId label = 0;
  FrameIndex frame = 0;
  std::string value;
  friend bool operator==(const FeatureEdit&, const FeatureEdit&) = default;
};

/// The prompt set P_l(s) selected for a label, with its anchor frame s.
struct ActivePrompts {
  FrameIndex anchor = 0;
  std::vector<Prompt> prompts;  // insertion order; boxes keep their ordinal order
};

namespace log_event {
struct AddPrompt { Prompt prompt; };
struct DeletePrompt { Token id; };
struct RegisterFeature { std::string name; };
struct RemoveFeature { std::string name; };
struct SetFeature { FeatureEdit edit; };
struct DeleteFeatureEdit { Token id; };
struct SetCheckpoint { FrameIndex frame; };
struct ClearCheckpoint { FrameIndex frame; };
}  // namespace log_event

using LogEvent =
    std::variant<log_event::AddPrompt, log_event::DeletePrompt, log_event::RegisterFeature,
                 log_event::RemoveFeature, log_event::SetFeature, log_event::DeleteFeatureEdit,
                 log_event::SetCheckpoint, log_event::ClearCheckpoint>;

// Append-only journal of prompt edits, feature edits and checkpoints, folded
// into indexed state. Everything is a pure function of the journal, so
// replaying it reconstructs the same state.
class TimelineLog {
 public:
  TimelineLog() = default;
  explicit TimelineLog(MediaBounds bounds) : bounds_(bounds) {}

  const MediaBounds& bounds() const noexcept { return bounds_; }

  // -- prompts ---------------------------------------------------------------

  Token add_point(const LabelRegistry& labels, FrameIndex frame, LabelId label, Pixel at,
                  PromptSign sign, PromptOrigin origin = PromptOrigin::Human) {
    Prompt p{next_id_, frame, label, origin, PointShape{at, sign}};
    validate_prompt(labels, p);
    return apply_add(std::move(p));
  }

  Token add_box(const LabelRegistry& labels, FrameIndex frame, LabelId label, Pixel a,
                Pixel b, PromptOrigin origin = PromptOrigin::Human) {
    Prompt p{next_id_, frame, label, origin, BoxShape{a, b}};
    validate_prompt(labels, p);
    return apply_add(std::move(p));
  }

  void delete_prompt(Token id) {
    if (!prompts_.contains(id)) {
      fail(ErrorKind::NotFound, "unknown prompt token " + std::to_string(id));
    }
    journal_.push_back(log_event::DeletePrompt{id});
    erase_prompt(id);
  }

  const Prompt& prompt(Token id) const {
    auto it = prompts_.find(id);
    if (it == prompts_.end()) fail(ErrorKind::NotFound, "unknown prompt token " + std::to_string(id));
    return it->second;
  }

  /// P_l(t), in insertion order.
  std::vector<Prompt> prompts_at(LabelId label, FrameIndex frame) const {
    std::vector<Prompt> out;
    auto lit = by_label_.find(label);
    if (lit == by_label_.end()) return out;
    auto fit = lit->second.find(frame);
    if (fit == lit->second.end()) return out;
    for (Token id : fit->second) out.push_back(prompts_.at(id));
    return out;
  }

  /// 1-based position of a box among the boxes of its (frame, label).
  int box_ordinal(Token id) const {
    const Prompt& p = prompt(id);
    if (!p.is_box()) fail(ErrorKind::Domain, "prompt is not a box");
    int ordinal = 0;
    for (const Prompt& q : prompts_at(p.label, p.frame)) {
      if (q.is_box()) ++ordinal;
      if (q.id == id) return ordinal;
    }
    return ordinal;
  }

  /// All prompts ordered by (frame, label, insertion).
  std::vector<Prompt> all_prompts() const {
    std::vector<Prompt> out;
    out.reserve(prompts_.size());
    for (const auto& [id, p] : prompts_) out.push_back(p);
    std::stable_sort(out.begin(), out.end(), [](const Prompt& a, const Prompt& b) {
      return std::pair(a.frame, a.label) < std::pair(b.frame, b.label);
    });
    return out;
  }

  bool has_prompts_at(FrameIndex frame) const {
    for (const auto& [label, frames] : by_label_) {
      if (frames.contains(frame)) return true;
    }
    return false;
  }

  bool has_prompts_at(LabelId label, FrameIndex frame) const {
    auto lit = by_label_.find(label);
    return lit != by_label_.end() && lit->second.contains(frame);
  }

  /// Closest-change selection: P_l(s) with s the latest prompted frame in
  /// [block.start, t]. The search never leaves the block.
  std::optional<ActivePrompts> active_prompts(LabelId label, FrameIndex t,
                                              FrameRange block) const {
    if (!block.contains(t)) fail(ErrorKind::Domain, "query frame outside block");
    auto lit = by_label_.find(label);
    if (lit == by_label_.end()) return std::nullopt;
    const auto& frames = lit->second;
    auto it = frames.upper_bound(t);
    if (it == frames.begin()) return std::nullopt;
    --it;
    if (it->first < block.start) return std::nullopt;
    return ActivePrompts{it->first, prompts_at(label, it->first)};
  }

  std::vector<LabelId> prompted_labels() const {
    std::vector<LabelId> out;
    for (const auto& [label, frames] : by_label_) out.push_back(label);
    return out;
  }

  // -- features --------------------------------------------------------------

  void register_feature(const std::string& name) {
    if (name.empty()) fail(ErrorKind::Domain, "feature name must be non-empty");
    if (features_.contains(name)) fail(ErrorKind::Conflict, "feature already registered: " + name);
    journal_.push_back(log_event::RegisterFeature{name});
    features_.insert(name);
  }

  void remove_feature(const std::string& name) {
    require_feature(name);
    journal_.push_back(log_event::RemoveFeature{name});
    apply_remove_feature(name);
  }

  const std::set<std::string>& features() const noexcept { return features_; }

  /// Records a value change at `frame`; an existing edit at the same
  /// (feature, label, frame) is overwritten and keeps its token.
  Token set_feature(const LabelRegistry& labels, const std::string& feature, LabelId label,
                    FrameIndex frame, std::string value) {
    require_feature(feature);
    labels.get(label);
    if (!bounds_.contains_frame(frame)) fail(ErrorKind::Domain, "feature edit frame out of range");
    Token id = next_id_;
    auto& series = feature_edits_[{feature, label}];
    if (auto it = series.find(frame); it != series.end()) id = it->second;
    FeatureEdit edit{id, feature, label, frame, std::move(value)};
    journal_.push_back(log_event::SetFeature{edit});
    apply_set_feature(std::move(edit));
    return id;
  }

  void delete_feature_edit(Token id) {
    if (!edits_.contains(id)) {
      fail(ErrorKind::NotFound, "unknown feature edit " + std::to_string(id));
    }
    journal_.push_back(log_event::DeleteFeatureEdit{id});
    apply_delete_edit(id);
  }

  /// Most-recent-change value: the edit with the largest frame <= t.
  /// Block boundaries do not apply. Empty when no edit precedes t.
  std::optional<std::string> feature_value(const std::string& feature, LabelId label,
                                           FrameIndex t) const {
    require_feature(feature);
    auto sit = feature_edits_.find({feature, label});
    if (sit == feature_edits_.end()) return std::nullopt;
    auto it = sit->second.upper_bound(t);
    if (it == sit->second.begin()) return std::nullopt;
    --it;
    return edits_.at(it->second).value;
  }

  std::vector<FeatureEdit> feature_edits() const {
    std::vector<FeatureEdit> out;
    for (const auto& [id, e] : edits_) out.push_back(e);
    return out;
  }

  // -- checkpoints -----------------------------------------------------------

  void set_checkpoint(FrameIndex frame) {
    if (!bounds_.contains_frame(frame)) {
      fail(ErrorKind::Domain, "checkpoint frame out of range: " + std::to_string(frame));
    }
    if (checkpoints_.contains(frame)) return;
    journal_.push_back(log_event::SetCheckpoint{frame});
    checkpoints_.insert(frame);
  }

  void clear_checkpoint(FrameIndex frame) {
    if (!checkpoints_.contains(frame)) {
      fail(ErrorKind::NotFound, "no checkpoint at frame " + std::to_string(frame));
    }
    journal_.push_back(log_event::ClearCheckpoint{frame});
    checkpoints_.erase(frame);
  }

  bool is_checkpoint(FrameIndex frame) const { return checkpoints_.contains(frame); }
  const std::set<FrameIndex>& checkpoints() const noexcept { return checkpoints_; }

  // -- journal ---------------------------------------------------------------

  const std::vector<LogEvent>& journal() const noexcept { return journal_; }

  /// Rebuilds state by folding a journal; validation is skipped since the
  /// events were validated when first recorded.
  static TimelineLog replay(MediaBounds bounds, const std::vector<LogEvent>& journal) {
    TimelineLog log(bounds);
    for (const LogEvent& ev : journal) log.apply(ev);
    log.journal_ = journal;
    return log;
  }

  /// Structural state equality (journal excluded).
  bool same_state(const TimelineLog& o) const {
    return bounds_ == o.bounds_ && prompts_ == o.prompts_ && by_label_ == o.by_label_ &&
           features_ == o.features_ && edits_ == o.edits_ && checkpoints_ == o.checkpoints_ &&
           next_id_ == o.next_id_;
  }

 private:
  void validate_prompt(const LabelRegistry& labels, const Prompt& p) const {
    labels.get(p.label);
    if (!bounds_.contains_frame(p.frame)) {
      fail(ErrorKind::Domain, "prompt frame out of range: " + std::to_string(p.frame));
    }
    auto check = [&](Pixel px) {
      if (!bounds_.contains_pixel(px.x, px.y)) {
        fail(ErrorKind::Domain, "prompt coordinate outside image");
      }
    };
    if (const auto* pt = p.point()) check(pt->at);
    if (const auto* bx = p.box()) {
      check(bx->corner_a);
      check(bx->corner_b);
    }
  }

  void require_feature(const std::string& name) const {
    if (!features_.contains(name)) fail(ErrorKind::NotFound, "unknown feature: " + name);
  }

  Token apply_add(Prompt p) {
    journal_.push_back(log_event::AddPrompt{p});
    const Token id = p.id;
    insert_prompt(std::move(p));
    return id;
  }

  void insert_prompt(Prompt p) {
    next_id_ = std::max(next_id_, p.id + 1);
    by_label_[p.label][p.frame].push_back(p.id);
    prompts_.emplace(p.id, std::move(p));
  }

  void erase_prompt(Token id) {
    auto it = prompts_.find(id);
    if (it == prompts_.end()) return;
    auto& frames = by_label_[it->second.label];
    auto& ids = frames[it->second.frame];
    ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
    if (ids.empty()) frames.erase(it->second.frame);
    if (frames.empty()) by_label_.erase(it->second.label);
    prompts_.erase(it);
  }

  void apply_set_feature(FeatureEdit edit) {
    next_id_ = std::max(next_id_, edit.id + 1);
    feature_edits_[{edit.feature, edit.label}][edit.frame] = edit.id;
    edits_[edit.id] = std::move(edit);
  }

  void apply_delete_edit(Token id) {
    auto it = edits_.find(id);
    if (it == edits_.end()) return;
    auto key = std::pair(it->second.feature, it->second.label);
    auto& series = feature_edits_[key];
    series.erase(it->second.frame);
    if (series.empty()) feature_edits_.erase(key);
    edits_.erase(it);
  }

  void apply_remove_feature(const std::string& name) {
    std::vector<Token> doomed;
    for (const auto& [id, e] : edits_) {
      if (e.feature == name) doomed.push_back(id);
    }
    for (Token id : doomed) apply_delete_edit(id);
    features_.erase(name);
  }

  void apply(const LogEvent& ev) {
    std::visit(
        [this](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, log_event::AddPrompt>) {
            insert_prompt(e.prompt);
          } else if constexpr (std::is_same_v<E, log_event::DeletePrompt>) {
            erase_prompt(e.id);
          } else if constexpr (std::is_same_v<E, log_event::RegisterFeature>) {
            features_.insert(e.name);
          } else if constexpr (std::is_same_v<E, log_event::RemoveFeature>) {
            apply_remove_feature(e.name);
          } else if constexpr (std::is_same_v<E, log_event::SetFeature>) {
            apply_set_feature(e.edit);
          } else if constexpr (std::is_same_v<E, log_event::DeleteFeatureEdit>) {
            apply_delete_edit(e.id);
          } else if constexpr (std::is_same_v<E, log_event::SetCheckpoint>) {
            checkpoints_.insert(e.frame);
          } else if constexpr (std::is_same_v<E, log_event::ClearCheckpoint>) {
            checkpoints_.erase(e.frame);
          }
        },
        ev);
  }

  MediaBounds bounds_;
  Token next_id_ = 1;
  std::vector<LogEvent> journal_;

  std::map<Token, Prompt> prompts_;
  std::map<LabelId, std::map<FrameIndex, std::vector<Token>>> by_label_;

  std::set<std::string> features_;
  std::map<Token, FeatureEdit> edits_;
  std::map<std::pair<std::string, LabelId>, std::map<FrameIndex, Token>> feature_edits_;

  std::set<FrameIndex> checkpoints_;
};

enum class Direction { Forward, Backward };

/// Writable range for a pass starting at t_curr: bounded by the block edge
/// and stopping one frame short of the nearest checkpoint in `direction`.
inline FrameRange clamp_range(FrameIndex t_curr, Direction direction, FrameRange block,
                              const std::set<FrameIndex>& checkpoints) {
  if (!block.contains(t_curr)) fail(ErrorKind::Domain, "t_curr outside block");
  if (direction == Direction::Forward) {
    FrameIndex end = block.end;
    if (auto it = checkpoints.upper_bound(t_curr); it != checkpoints.end()) {
      end = std::min(end, *it - 1);
    }
    return {t_curr, end};
  }
  FrameIndex start = block.start;
  if (auto it = checkpoints.lower_bound(t_curr); it != checkpoints.begin()) {
    start = std::max(start, *std::prev(it) + 1);
  }
  return {start, t_curr};
}

}  // namespace vidanno
