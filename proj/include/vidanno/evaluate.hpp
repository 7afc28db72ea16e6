#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidanno/metrics.hpp"

namespace vidanno::metrics {

enum class Matching { Identity, Greedy };

std::optional<Matching> parse_matching(const std::string& s);

/// Streaming accumulator for one sequence. Each frame contributes a joint
/// histogram of (pred id, gt id) pixel counts; scores are derived at the end.
class SequenceEvaluator {
 public:
  void add_frame(const LabelMap& pred, const LabelMap& gt);
  int frames() const noexcept { return static_cast<int>(frames_.size()); }
  ReportRow finish(const std::string& name, Matching matching) const;

 private:
  struct Frame {
    std::map<std::pair<int, int>, std::uint64_t> joint;  // (pred id, gt id) -> pixels
    std::uint64_t pixels = 0;
  };
  std::vector<Frame> frames_;
};

/// Scores the palette PNGs that share a file name in both directories.
/// Throws Domain when there is no common frame.
ReportRow evaluate_sequence(const std::filesystem::path& pred_dir,
                            const std::filesystem::path& gt_dir, Matching matching,
                            const std::string& name = {});

/// One row per sequence. A GT root made of subdirectories is read as several
/// sequences (pred root must mirror the names) and gets Average and Std dev.
/// rows; otherwise the root itself is the single sequence.
std::vector<ReportRow> evaluate_report(const std::filesystem::path& pred_root,
                                       const std::filesystem::path& gt_root, Matching matching);

std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace vidanno::metrics
