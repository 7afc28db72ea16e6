#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vidanno/autoprompt.hpp"
#include "vidanno/backend.hpp"
#include "vidanno/events.hpp"
#include "vidanno/media.hpp"
#include "vidanno/propagation.hpp"

namespace vidanno {

struct SessionSettings {
  bool auto_prompt = true;
  bool show_label_names = false;
  bool cache_enabled = true;
  ViewMode view_mode = ViewMode::Original;
  LabelId active_label = 0;
  FrameIndex cursor = 0;
  friend bool operator==(const SessionSettings&, const SessionSettings&) = default;
};

/// Everything that is saved with a session.
struct SessionData {
  std::string session_id;
  MediaInfo media;
  int block_size = 0;
  LabelRegistry labels;
  TimelineLog log;
  MaskStore masks;
  SessionSettings settings;

  bool has_media() const noexcept { return media.frames > 0; }
};

/// Slider track flags for one frame.
struct FrameFlags {
  FrameIndex frame = 0;
  bool has_user_prompt = false;
  bool has_prompt_for_active_label = false;
  bool has_mask = false;
  bool has_mask_for_active_label = false;
  bool is_checkpoint = false;
  bool is_cursor = false;
};

enum class ExportKind { Png, Yolo, Tabular };

struct ExportReport {
  std::filesystem::path directory;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

struct SessionConfig {
  std::filesystem::path workdir = "vidanno_work";
  std::size_t cache_capacity = 64;
  AutoPromptConfig auto_prompt;
};

// The single annotation session of a process. All mutations serialize on one
// lock and are refused with a busy error while a propagation job runs; the
// job itself is the only writer during that time.
class Session {
 public:
  Session(SessionConfig config, std::shared_ptr<Backend> backend,
          std::shared_ptr<ResidencyCounter> residency = std::make_shared<ResidencyCounter>());
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  // media
  MediaInfo load_media(const std::filesystem::path& source, int block_size);
  BlockPlan block_plan() const;
  /// Extracts block b; frames stay on disk, not in memory.
  std::filesystem::path activate_block(int b);

  // labels
  Label create_label(const std::string& name);
  Label rename_label(LabelId id, const std::string& name);

  // prompts
  Token add_point(FrameIndex frame, LabelId label, Pixel at, PromptSign sign,
                  PromptOrigin origin = PromptOrigin::Human);
  Token add_box(FrameIndex frame, LabelId label, Pixel a, Pixel b,
                PromptOrigin origin = PromptOrigin::Human);
  void delete_prompt(Token id);

  // features
  void register_feature(const std::string& name);
  Token set_feature(const std::string& feature, LabelId label, FrameIndex frame,
                    const std::string& value);
  void delete_feature_edit(Token id);
  std::optional<std::string> feature_value(const std::string& feature, LabelId label,
                                           FrameIndex t) const;

  // checkpoints
  void set_checkpoint(FrameIndex t);
  void clear_checkpoint(FrameIndex t);

  // settings
  SessionSettings settings() const;
  void update_settings(const SessionSettings& s);

  // propagation
  std::uint64_t start_job(PropagationMode mode, FrameIndex t_curr);
  JobInfo job(std::uint64_t id) const;
  void cancel_job(std::uint64_t id);
  /// Blocks until the job leaves the running state or the timeout passes.
  bool wait_job(std::uint64_t id, std::chrono::milliseconds timeout = std::chrono::minutes(10));
  bool job_running() const noexcept { return running_.load(); }

  // views
  std::shared_ptr<const Image> render(FrameIndex t, ViewMode mode);
  std::vector<FrameFlags> timeline(int block, std::optional<LabelId> active_label = std::nullopt,
                                   std::optional<FrameIndex> cursor = std::nullopt) const;

  // export / persistence
  ExportReport export_to(const std::filesystem::path& out_root,
                         const std::vector<ExportKind>& kinds);
  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path,
            const std::optional<std::filesystem::path>& media_remap = std::nullopt);

  /// Runs `f` on a consistent snapshot of the session state.
  template <class F>
  auto read(F&& f) const {
    std::lock_guard lock(mutex_);
    return f(static_cast<const SessionData&>(data_));
  }

  EventBus& events() noexcept { return events_; }
  ResidencyCounter& residency() noexcept { return *residency_; }
  Backend& backend() noexcept { return *backend_; }
  const SessionConfig& config() const noexcept { return config_; }
  MediaPipeline& media() noexcept { return media_; }

 private:
  struct Job;

  void require_idle() const;
  void require_media() const;
  void emit(const std::string& type, const std::string& json) { events_.publish(type, json); }
  void run_job(Job& job, std::vector<PassPlan> passes);
  void run_pass(Job& job, const PassPlan& pass, int pass_index);
  int block_transition(const PassPlan& pass);
  void publish_job(const JobInfo& info);

  SessionConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ResidencyCounter> residency_;
  MediaPipeline media_;
  OverlayCache cache_;
  EventBus events_;

  mutable std::mutex mutex_;
  SessionData data_;

  mutable std::mutex job_mutex_;
  std::condition_variable job_cv_;
  std::map<std::uint64_t, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_job_id_ = 1;
  std::atomic<bool> running_{false};
  std::thread worker_;
};

std::string to_string(ExportKind kind);
std::optional<ExportKind> parse_export_kind(const std::string& s);

}  // namespace vidanno
