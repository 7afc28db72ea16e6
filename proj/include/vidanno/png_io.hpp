#pragma once

#include <filesystem>

#include "vidanno/raster.hpp"

namespace vidanno {

/// Writes a label map as an 8-bit palette PNG carrying the full 256-entry
/// colormap, so pixel index == label id.
void write_indexed_png(const std::filesystem::path& path, const LabelMap& map);

/// Reads palette indices (palette PNG) or raw values (8-bit grayscale PNG).
/// RGB PNGs are decoded through the colormap; unknown colors are a format error.
LabelMap read_label_png(const std::filesystem::path& path);

}  // namespace vidanno
