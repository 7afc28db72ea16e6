#include "vidanno/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "vidanno/colormap.hpp"

namespace vidanno {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

void quiet_warning(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; the functions below keep every C++ object
// in the caller so no destructor is skipped by the jump.

bool write_rows(std::FILE* file, int width, int height, const png_color* palette,
                const std::uint8_t* pixels) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, palette, kColormapSize);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, pixels + static_cast<std::size_t>(y) * static_cast<std::size_t>(width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  std::size_t row_bytes = 0;
};

// Two-phase read: first call (buffer == nullptr) fills the header only.
bool read_png(std::FILE* file, PngHeader& hdr, png_byte* buffer) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (depth < 8) png_set_packing(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  hdr.width = png_get_image_width(png, info);
  hdr.height = png_get_image_height(png, info);
  hdr.channels = png_get_channels(png, info);
  hdr.row_bytes = png_get_rowbytes(png, info);
  if (buffer) {
    for (png_uint_32 y = 0; y < hdr.height; ++y) png_read_row(png, buffer + y * hdr.row_bytes, nullptr);
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

FilePtr open_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorKind::Format, "not a PNG file: " + path.string());
  }
  return file;
}

}  // namespace

void write_indexed_png(const std::filesystem::path& path, const LabelMap& map) {
  FilePtr file = open_file(path, "wb");
  std::vector<png_color> palette(kColormapSize);
  for (int i = 0; i < kColormapSize; ++i) {
    const Rgb c = kVocColormap[static_cast<std::size_t>(i)];
    palette[static_cast<std::size_t>(i)] = {c.r, c.g, c.b};
  }
  if (!write_rows(file.get(), map.width(), map.height(), palette.data(), map.pixels().data()) ||
      std::fflush(file.get()) != 0) {
    fail(ErrorKind::Io, "failed to write PNG " + path.string());
  }
}

LabelMap read_label_png(const std::filesystem::path& path) {
  PngHeader hdr;
  if (!read_png(open_png(path).get(), hdr, nullptr)) {
    fail(ErrorKind::Format, "corrupt PNG " + path.string());
  }
  std::vector<png_byte> rows(hdr.row_bytes * hdr.height);
  if (!read_png(open_png(path).get(), hdr, rows.data())) {
    fail(ErrorKind::Format, "corrupt PNG " + path.string());
  }
  const int width = static_cast<int>(hdr.width), height = static_cast<int>(hdr.height);
  LabelMap out(width, height, 0);
  for (int y = 0; y < height; ++y) {
    const png_byte* row = rows.data() + static_cast<std::size_t>(y) * hdr.row_bytes;
    for (int x = 0; x < width; ++x) {
      if (hdr.channels == 1) {
        out(x, y) = row[x];
        continue;
      }
      const png_byte* p = row + static_cast<std::size_t>(x) * static_cast<std::size_t>(hdr.channels);
      auto idx = colormap_index(Rgb{p[0], p[1], p[2]});
      if (!idx) fail(ErrorKind::Format, "pixel color not in colormap: " + path.string());
      out(x, y) = static_cast<std::uint8_t>(*idx);
    }
  }
  return out;
}

}  // namespace vidanno
