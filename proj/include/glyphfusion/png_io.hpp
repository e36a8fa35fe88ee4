#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "glyphfusion/image.hpp"

namespace glyphfusion {

/// 8-bit single channel raster as stored on disk (0 = black, 255 = white).
struct GrayRaster {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;
};

GrayRaster read_png(const std::filesystem::path& path);
/// Output bytes depend only on the raster contents.
void write_png(const std::filesystem::path& path, const GrayRaster& raster);

/// Loads dark-ink-on-white PNG and inverts it to ink intensity.
GlyphImage load_glyph_png(const std::filesystem::path& path);
void save_glyph_png(const std::filesystem::path& path, const GlyphImage& img);

GrayRaster to_raster(const GlyphImage& img);
GlyphImage from_raster(const GrayRaster& raster);

/// Row-major tiling with `columns` tiles per row and a 1px white gutter.
GrayRaster mosaic(const std::vector<GlyphImage>& tiles, int columns);

}  // namespace glyphfusion
