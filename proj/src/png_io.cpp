#include "glyphfusion/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  require(f != nullptr, ErrorKind::kIo, "cannot open " + path.string());
  return f;
}

}  // namespace

GrayRaster read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    raise(ErrorKind::kDecodeFailure, "not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorKind::kDecodeFailure, "libpng initialisation failed");
  }
  GrayRaster out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorKind::kDecodeFailure, "corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<size_t>(out.width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorKind::kDecodeFailure, "unsupported PNG layout: " + path.string());
  }
  out.data.resize(static_cast<size_t>(out.width) * out.height);
  rows.resize(static_cast<size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<size_t>(y)] = out.data.data() + static_cast<size_t>(y) * out.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const GrayRaster& raster) {
  require(raster.width > 0 && raster.height > 0 &&
              raster.data.size() == static_cast<size_t>(raster.width) * raster.height,
          ErrorKind::kInvalidArgument, "malformed raster");
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorKind::kIo, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorKind::kIo, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(raster.data.data() + static_cast<size_t>(y) * raster.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayRaster to_raster(const GlyphImage& img) {
  GrayRaster r{img.side(), img.side(), {}};
  r.data.reserve(img.pixels().size());
  for (float v : img.pixels()) {
    r.data.push_back(static_cast<uint8_t>(std::lround(255.0 * (1.0 - static_cast<double>(v)))));
  }
  return r;
}

GlyphImage from_raster(const GrayRaster& raster) {
  std::vector<float> px;
  px.reserve(raster.data.size());
  for (uint8_t b : raster.data) px.push_back(1.0f - static_cast<float>(b) / 255.0f);
  return GlyphImage(raster.height, raster.width, std::move(px));
}

GlyphImage load_glyph_png(const std::filesystem::path& path) { return from_raster(read_png(path)); }

void save_glyph_png(const std::filesystem::path& path, const GlyphImage& img) { write_png(path, to_raster(img)); }

GrayRaster mosaic(const std::vector<GlyphImage>& tiles, int columns) {
  require(!tiles.empty() && columns > 0, ErrorKind::kInvalidArgument, "mosaic needs tiles");
  const int side = tiles.front().side();
  const int n = static_cast<int>(tiles.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  GrayRaster out{rows * (side + 1) - 1, cols * (side + 1) - 1, {}};
  out.data.assign(static_cast<size_t>(out.height) * out.width, 255);
  for (int i = 0; i < n; ++i) {
    require(tiles[static_cast<size_t>(i)].side() == side, ErrorKind::kShapeMismatch, "mosaic tiles differ in size");
    auto tile = to_raster(tiles[static_cast<size_t>(i)]);
    const int oy = (i / cols) * (side + 1);
    const int ox = (i % cols) * (side + 1);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        out.data[static_cast<size_t>(oy + y) * out.width + ox + x] = tile.data[static_cast<size_t>(y) * side + x];
      }
    }
  }
  return out;
}

}  // namespace glyphfusion
