#include "vidanno/session.hpp"

#include <random>

#include <json.hpp>

#include "json_codec.hpp"
#include "vidanno/export.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace vidanno {

std::string to_string(ExportKind kind) {
  switch (kind) {
    case ExportKind::Png: return "png";
    case ExportKind::Yolo: return "yolo";
    case ExportKind::Tabular: return "tabular";
  }
  return "png";
}

std::optional<ExportKind> parse_export_kind(const std::string& s) {
  if (s == "png") return ExportKind::Png;
  if (s == "yolo") return ExportKind::Yolo;
  if (s == "tabular") return ExportKind::Tabular;
  return std::nullopt;
}

namespace {

std::string new_session_id() {
  std::random_device rd;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
  return buf;
}

}  // namespace

struct Session::Job {
  JobInfo info;
  std::atomic<bool> cancel{false};
};

Session::Session(SessionConfig config, std::shared_ptr<Backend> backend,
                 std::shared_ptr<ResidencyCounter> residency)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      residency_(std::move(residency)),
      media_(config_.workdir, residency_.get()),
      cache_(config_.cache_capacity) {
  data_.session_id = new_session_id();
}

Session::~Session() {
  {
    std::lock_guard lock(job_mutex_);
    for (auto& [id, job] : jobs_) job->cancel = true;
  }
  if (worker_.joinable()) worker_.join();
  events_.close_all();
}

void Session::require_idle() const {
  if (running_) fail(ErrorKind::Busy, "a propagation job is running");
}

void Session::require_media() const {
  if (!data_.has_media()) fail(ErrorKind::State, "no media loaded");
}

// ---------------------------------------------------------------------------
// media

MediaInfo Session::load_media(const fs::path& source, int block_size) {
  std::lock_guard lock(mutex_);
  require_idle();
  media_.load(source, block_size);
  data_.media = media_.info();
  data_.block_size = block_size;
  data_.log = TimelineLog(data_.media.bounds());
  data_.masks = MaskStore(data_.media.width, data_.media.height);
  data_.settings.cursor = 0;
  cache_.clear();
  emit("media", json{{"frames", data_.media.frames}, {"block_size", block_size}}.dump());
  return data_.media;
}

BlockPlan Session::block_plan() const {
  std::lock_guard lock(mutex_);
  require_media();
  return media_.plan();
}

fs::path Session::activate_block(int b) {
  {
    std::lock_guard lock(mutex_);
    require_media();
  }
  return media_.materialize_block(b);
}

// ---------------------------------------------------------------------------
// labels, prompts, features, checkpoints

Label Session::create_label(const std::string& name) {
  std::lock_guard lock(mutex_);
  require_idle();
  Label l = data_.labels.create(name);
  emit("labels", json{{"id", l.id}, {"name", l.name}}.dump());
  return l;
}

Label Session::rename_label(LabelId id, const std::string& name) {
  std::lock_guard lock(mutex_);
  require_idle();
  Label l = data_.labels.rename(id, name);
  emit("labels", json{{"id", l.id}, {"name", l.name}}.dump());
  return l;
}

Token Session::add_point(FrameIndex frame, LabelId label, Pixel at, PromptSign sign,
                         PromptOrigin origin) {
  std::lock_guard lock(mutex_);
  require_idle();
  require_media();
  const Token id = data_.log.add_point(data_.labels, frame, label, at, sign, origin);
  emit("prompts", json{{"op", "add"}, {"id", id}, {"frame", frame}, {"label", label}}.dump());
  return id;
}

Token Session::add_box(FrameIndex frame, LabelId label, Pixel a, Pixel b, PromptOrigin origin) {
  std::lock_guard lock(mutex_);
  require_idle();
  require_media();
  const Token id = data_.log.add_box(data_.labels, frame, label, a, b, origin);
  emit("prompts", json{{"op", "add"}, {"id", id}, {"frame", frame}, {"label", label}}.dump());
  return id;
}

void Session::delete_prompt(Token id) {
  std::lock_guard lock(mutex_);
  require_idle();
  const Prompt p = data_.log.prompt(id);
  data_.log.delete_prompt(id);
  emit("prompts", json{{"op", "delete"}, {"id", id}, {"frame", p.frame}, {"label", p.label}}.dump());
}

void Session::register_feature(const std::string& name) {
  std::lock_guard lock(mutex_);
  require_idle();
  require_media();
  data_.log.register_feature(name);
  emit("features", json{{"op", "register"}, {"name", name}}.dump());
}

Token Session::set_feature(const std::string& feature, LabelId label, FrameIndex frame,
                           const std::string& value) {
  std::lock_guard lock(mutex_);
  require_idle();
  const Token id = data_.log.set_feature(data_.labels, feature, label, frame, value);
  emit("features", json{{"op", "edit"}, {"id", id}, {"feature", feature}, {"frame", frame}}.dump());
  return id;
}

void Session::delete_feature_edit(Token id) {
  std::lock_guard lock(mutex_);
  require_idle();
  data_.log.delete_feature_edit(id);
  emit("features", json{{"op", "delete_edit"}, {"id", id}}.dump());
}

std::optional<std::string> Session::feature_value(const std::string& feature, LabelId label,
                                                  FrameIndex t) const {
  std::lock_guard lock(mutex_);
  return data_.log.feature_value(feature, label, t);
}

void Session::set_checkpoint(FrameIndex t) {
  std::lock_guard lock(mutex_);
  require_idle();
  require_media();
  data_.log.set_checkpoint(t);
  emit("checkpoints", json{{"op", "set"}, {"frame", t}}.dump());
}

void Session::clear_checkpoint(FrameIndex t) {
  std::lock_guard lock(mutex_);
  require_idle();
  data_.log.clear_checkpoint(t);
  emit("checkpoints", json{{"op", "clear"}, {"frame", t}}.dump());
}

SessionSettings Session::settings() const {
  std::lock_guard lock(mutex_);
  return data_.settings;
}

void Session::update_settings(const SessionSettings& s) {
  std::lock_guard lock(mutex_);
  if (s.active_label != 0 && !data_.labels.contains(s.active_label)) {
    fail(ErrorKind::NotFound, "unknown label id " + std::to_string(s.active_label));
  }
  if (data_.has_media() && (s.cursor < 0 || s.cursor >= data_.media.frames)) {
    fail(ErrorKind::Domain, "cursor out of range");
  }
  data_.settings = s;
  if (!s.cache_enabled) cache_.clear();
  emit("settings", json{{"auto_prompt", s.auto_prompt}, {"cursor", s.cursor}}.dump());
}

// ---------------------------------------------------------------------------
// propagation

std::uint64_t Session::start_job(PropagationMode mode, FrameIndex t_curr) {
  std::lock_guard lock(mutex_);
  require_media();
  require_idle();
  std::vector<PassPlan> passes = plan_passes(mode, t_curr, media_.plan(), data_.log);

  auto job = std::make_shared<Job>();
  {
    std::lock_guard jl(job_mutex_);
    job->info.id = next_job_id_++;
    job->info.mode = mode;
    job->info.t_curr = t_curr;
    job->info.block = media_.plan().block(media_.plan().block_of(t_curr));
    for (const auto& p : passes) {
      job->info.frames_total += static_cast<int>(p.frames.size());
      job->info.warnings.insert(job->info.warnings.end(), p.warnings.begin(), p.warnings.end());
    }
    jobs_[job->info.id] = job;
  }
  if (worker_.joinable()) worker_.join();  // previous job has already finished
  running_ = true;
  publish_job(job->info);
  worker_ = std::thread([this, job, passes = std::move(passes)]() mutable {
    run_job(*job, std::move(passes));
  });
  return job->info.id;
}

JobInfo Session::job(std::uint64_t id) const {
  std::lock_guard lock(job_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorKind::NotFound, "unknown job " + std::to_string(id));
  return it->second->info;
}

void Session::cancel_job(std::uint64_t id) {
  std::lock_guard lock(job_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end() || it->second->info.finished()) {
    fail(ErrorKind::NotFound, "no running job " + std::to_string(id));
  }
  it->second->cancel = true;
}

bool Session::wait_job(std::uint64_t id, std::chrono::milliseconds timeout) {
  std::unique_lock lock(job_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorKind::NotFound, "unknown job " + std::to_string(id));
  auto job = it->second;
  return job_cv_.wait_for(lock, timeout, [&] { return job->info.finished(); });
}

void Session::publish_job(const JobInfo& info) { emit("job", codec::job_json(info).dump()); }

void Session::run_job(Job& job, std::vector<PassPlan> passes) {
  JobStatus status = JobStatus::Done;
  std::string error;
  int auto_added = 0;
  try {
    for (std::size_t i = 0; i < passes.size(); ++i) {
      if (job.cancel) break;
      run_pass(job, passes[i], static_cast<int>(i));
      if (job.cancel) break;
      if (passes[i].lookahead) auto_added += block_transition(passes[i]);
    }
    if (job.cancel) status = JobStatus::Cancelled;
  } catch (const std::exception& e) {
    status = JobStatus::Failed;
    error = e.what();
  }

  JobInfo final_info;
  {
    std::lock_guard lock(job_mutex_);
    job.info.status = status;
    job.info.error = error;
    job.info.auto_prompts_added = auto_added;
    if (status == JobStatus::Done) job.info.frames_done = job.info.frames_total;
    final_info = job.info;
    running_ = false;
  }
  job_cv_.notify_all();
  publish_job(final_info);
}

void Session::run_pass(Job& job, const PassPlan& pass, int pass_index) {
  const BlockPlan plan = media_.plan();
  std::vector<fs::path> paths;
  for (FrameIndex f : pass.frames) {
    if (pass.lookahead && f == *pass.lookahead) {
      paths.push_back(media_.lookahead_path(plan.block_of(f) - 1));
    } else {
      paths.push_back(media_.frame_path(f));
    }
  }
  std::set<FrameIndex> checkpoints;
  {
    std::lock_guard lock(mutex_);
    checkpoints = data_.log.checkpoints();
  }

  int base_done = 0;
  {
    std::lock_guard lock(job_mutex_);
    base_done = job.info.frames_done;
  }

  const std::string state_id =
      "job" + std::to_string(job.info.id) + "-pass" + std::to_string(pass_index);
  backend_->init_state(state_id, paths);

  std::vector<InstanceMask> pending;
  int pending_pos = -1;
  auto flush = [&] {
    if (pending_pos < 0) return;
    const FrameIndex frame = pass.frames[static_cast<std::size_t>(pending_pos)];
    std::uint64_t version = 0;
    {
      std::lock_guard lock(mutex_);
      if (pass.lookahead && frame == *pass.lookahead) {
        for (auto& m : pending) data_.masks.commit_lookahead(std::move(m));
      } else {
        for (auto& m : pending) {
          m.source = data_.log.has_prompts_at(m.label, frame) ? MaskSource::Prompted
                                                              : MaskSource::Propagated;
        }
        data_.masks.commit(std::move(pending), pass.writable, checkpoints);
        emit("masks", json{{"frame", frame}, {"revision", data_.masks.frame_revision(frame)}}.dump());
      }
      version = data_.masks.version();
    }
    pending.clear();
    JobInfo snapshot;
    {
      std::lock_guard lock(job_mutex_);
      job.info.frames_done = base_done + pending_pos + 1;
      job.info.current_frame = frame;
      snapshot = job.info;
    }
    (void)version;
    publish_job(snapshot);
    pending_pos = -1;
  };

  try {
    for (const LabelAnchor& a : pass.anchors) {
      PromptBundle bundle;
      bundle.frame_pos = pass.position_of(a.applied_at);
      bundle.label = a.label;
      for (const Prompt& p : a.prompts) {
        if (const auto* pt = p.point()) {
          bundle.points.push_back({pt->at.x, pt->at.y, pt->sign == PromptSign::Positive});
        } else if (const auto* bx = p.box(); bx && !bundle.box) {
          bundle.box = *bx;
        }
      }
      backend_->add_prompts(state_id, bundle);
    }

    backend_->propagate(state_id, [&](MaskResult r) {
      if (r.frame_pos < 0 || r.frame_pos >= static_cast<int>(pass.frames.size())) {
        fail(ErrorKind::Format, "backend returned frame_pos out of range");
      }
      if (r.frame_pos != pending_pos) {
        flush();
        if (job.cancel) return false;
        pending_pos = r.frame_pos;
      }
      const FrameIndex frame = pass.frames[static_cast<std::size_t>(r.frame_pos)];
      pending.push_back(InstanceMask{frame, r.label, std::move(r.mask), MaskSource::Propagated, 0});
      return true;
    });
    if (!job.cancel) flush();
  } catch (...) {
    try {
      flush();  // keep what arrived before the failure
    } catch (...) {
    }
    try {
      backend_->reset(state_id);
    } catch (...) {
    }
    throw;
  }
  backend_->reset(state_id);
  if (!job.cancel) {
    std::lock_guard lock(job_mutex_);
    job.info.frames_done = base_done + static_cast<int>(pass.frames.size());
  }
}

int Session::block_transition(const PassPlan& pass) {
  std::lock_guard lock(mutex_);
  if (!data_.settings.auto_prompt || !pass.lookahead) return 0;
  const FrameIndex next_start = *pass.lookahead;
  const FrameIndex last = next_start - 1;
  int added = 0;
  for (const LabelAnchor& a : pass.anchors) {
    const InstanceMask* tail = data_.masks.get(last, a.label);
    const InstanceMask* ahead = data_.masks.lookahead(next_start, a.label);
    if (!tail || !ahead || count_set(tail->bitmap) == 0) continue;
    const auto prompts = prompts_from_mask(a.label, next_start, ahead->bitmap, config_.auto_prompt);
    if (prompts.empty()) continue;
    // Earlier auto prompts on this frame came from an older lookahead mask.
    for (const Prompt& old : data_.log.prompts_at(a.label, next_start)) {
      if (old.origin == PromptOrigin::Auto) data_.log.delete_prompt(old.id);
    }
    for (const Prompt& p : prompts) {
      const auto* pt = p.point();
      data_.log.add_point(data_.labels, next_start, a.label, pt->at, PromptSign::Positive,
                          PromptOrigin::Auto);
      ++added;
    }
  }
  if (added > 0) {
    emit("prompts", json{{"op", "auto"}, {"frame", next_start}, {"count", added}}.dump());
  }
  return added;
}

// ---------------------------------------------------------------------------
// views

std::shared_ptr<const Image> Session::render(FrameIndex t, ViewMode mode) {
  LabelMap composite;
  std::vector<Prompt> prompts;
  LabelRegistry labels;
  std::vector<std::pair<std::string, Centroid>> names;
  std::uint64_t version = 0;
  bool use_cache = true;
  {
    std::lock_guard lock(mutex_);
    require_media();
    if (t < 0 || t >= data_.media.frames) fail(ErrorKind::Domain, "frame out of range");
    const bool needs_masks = mode == ViewMode::Overlay || mode == ViewMode::Masks;
    if (needs_masks && !data_.masks.has_mask(t)) {
      fail(ErrorKind::State, "no masks generated for frame " + std::to_string(t));
    }
    use_cache = data_.settings.cache_enabled;
    const bool show_names = data_.settings.show_label_names && needs_masks;
    if (mode == ViewMode::Prompts) {
      version = data_.log.journal().size();
    } else if (needs_masks) {
      version = data_.masks.frame_revision(t) * 2 + (show_names ? 1 : 0);
    }
    if (use_cache) {
      if (auto hit = cache_.get(t, mode, version)) return hit;
    }
    if (needs_masks) {
      composite = data_.masks.composite(t);
      if (show_names) {
        for (const InstanceMask* m : data_.masks.at(t)) {
          if (auto c = centroid(m->bitmap)) names.emplace_back(data_.labels.get(m->label).name, *c);
        }
      }
    }
    if (mode == ViewMode::Prompts) {
      for (const Prompt& p : data_.log.all_prompts()) {
        if (p.frame == t) prompts.push_back(p);
      }
      labels = data_.labels;
    }
  }

  Image out;
  switch (mode) {
    case ViewMode::Original: out = media_.read_frame(t).image(); break;
    case ViewMode::Prompts: out = render_prompts(media_.read_frame(t).image(), prompts, labels); break;
    case ViewMode::Overlay: out = render_overlay(media_.read_frame(t).image(), composite); break;
    case ViewMode::Masks: out = render_label_colors(composite); break;
  }
  if (!names.empty()) draw_label_names(out, names);
  auto shared = std::make_shared<const Image>(std::move(out));
  if (use_cache) cache_.put(t, mode, version, shared);
  return shared;
}

std::vector<FrameFlags> Session::timeline(int block, std::optional<LabelId> active_label,
                                          std::optional<FrameIndex> cursor) const {
  std::lock_guard lock(mutex_);
  require_media();
  const FrameRange range = media_.plan().block(block);
  const LabelId active = active_label.value_or(data_.settings.active_label);
  const FrameIndex cur = cursor.value_or(data_.settings.cursor);
  std::vector<FrameFlags> out;
  std::set<FrameIndex> human;
  for (const Prompt& p : data_.log.all_prompts()) {
    if (p.origin == PromptOrigin::Human) human.insert(p.frame);
  }
  for (FrameIndex t = range.start; t <= range.end; ++t) {
    FrameFlags f;
    f.frame = t;
    f.has_user_prompt = human.contains(t);
    f.has_prompt_for_active_label = active != 0 && data_.log.has_prompts_at(active, t);
    f.has_mask = data_.masks.has_mask(t);
    f.has_mask_for_active_label = active != 0 && data_.masks.has_mask(t, active);
    f.is_checkpoint = data_.log.is_checkpoint(t);
    f.is_cursor = t == cur;
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// export / persistence

ExportReport Session::export_to(const fs::path& out_root, const std::vector<ExportKind>& kinds) {
  std::lock_guard lock(mutex_);
  require_idle();
  require_media();
  ExportReport r = export_session(data_, out_root, kinds,
                                  [this](FrameIndex t) { return media_.frame_path(t); });
  emit("export", json{{"directory", r.directory.string()}, {"files", r.files.size()}}.dump());
  return r;
}

void Session::save(const fs::path& path) {
  std::lock_guard lock(mutex_);
  require_idle();
  save_session_file(data_, path);
  emit("session", json{{"op", "save"}, {"path", path.string()}}.dump());
}

void Session::load(const fs::path& path, const std::optional<fs::path>& media_remap) {
  SessionData loaded = load_session_file(path);
  std::lock_guard lock(mutex_);
  require_idle();
  fs::path source = loaded.media.source;
  if (media_remap) {
    source = *media_remap;
  } else if (std::error_code ec; !fs::exists(source, ec)) {
    fail(ErrorKind::MissingMedia,
         "media not found at " + source.string() + "; supply a media path remap");
  }
  // Validate the media against the record before touching the live session.
  MediaPipeline probe(config_.workdir / "probe", nullptr);
  probe.load(source, loaded.block_size);
  const MediaInfo& found = probe.info();
  if (found.frames != loaded.media.frames || found.width != loaded.media.width ||
      found.height != loaded.media.height) {
    fail(ErrorKind::Format, "media at " + source.string() + " does not match the saved session");
  }
  std::error_code ec;
  fs::remove_all(config_.workdir / "probe", ec);

  media_.load(source, loaded.block_size);
  loaded.media.source = source;
  data_ = std::move(loaded);
  cache_.clear();
  emit("session", json{{"op", "load"}, {"session_id", data_.session_id}}.dump());
}

}  // namespace vidanno
