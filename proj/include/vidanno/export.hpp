#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vidanno/session.hpp"

namespace vidanno {

/// Resolves the on-disk raw image of a frame.
using RawFrameFn = std::function<std::filesystem::path(FrameIndex)>;

/// Writes the requested export families under out_root/<session_id>/.
///
/// Layout:
///   images/frame_%06d.png   raw frames that carry at least one mask
///   masks/frame_%06d.png    palette-indexed composite label maps
///   yolo/frame_%06d.txt     one polygon line per instance component
///   prompts.csv, centroids.csv, labels.csv
ExportReport export_session(const SessionData& data, const std::filesystem::path& out_root,
                            const std::vector<ExportKind>& kinds, const RawFrameFn& raw_frame);

/// YOLO segmentation lines for one instance; degenerate pieces produce a
/// warning instead of a line.
std::vector<std::string> yolo_lines(const InstanceMask& mask, std::vector<std::string>& warnings);

std::string prompts_csv(const SessionData& data);
std::string centroids_csv(const SessionData& data);
std::string labels_csv(const LabelRegistry& labels);

/// Quotes a CSV field when it contains a separator, quote or newline.
std::string csv_field(const std::string& s);

inline constexpr int kSessionFormatVersion = 1;

/// Serializes the whole session to one JSON document, atomically replacing
/// `path` (write to a sibling temp file, then rename).
void save_session_file(const SessionData& data, const std::filesystem::path& path);

/// Parses a saved session. Nothing is returned unless every part is valid.
/// Throws UnsupportedVersion for other format versions and Format for
/// malformed or truncated files. Media presence is not checked here.
SessionData load_session_file(const std::filesystem::path& path);

}  // namespace vidanno
