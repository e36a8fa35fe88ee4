#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "glyphfusion/image.hpp"

namespace glyphfusion {

struct OutlinePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Closed polyline in font units (y up).
using Polyline = std::vector<OutlinePoint>;

/// Read-only view over a TrueType (glyf-outline) font file. CFF-flavoured
/// OpenType files are rejected with kDecodeFailure.
class TrueTypeFont {
 public:
  static TrueTypeFont load(const std::filesystem::path& path);
  explicit TrueTypeFont(std::vector<uint8_t> bytes);

  int units_per_em() const noexcept { return units_per_em_; }
  int num_glyphs() const noexcept { return num_glyphs_; }

  /// Glyph id for a code point, nullopt when unmapped.
  std::optional<uint16_t> glyph_index(char32_t codepoint) const;

  /// Outline flattened to closed polylines; empty for blank glyphs.
  std::vector<Polyline> outline(uint16_t glyph) const;

 private:
  struct Table {
    uint32_t offset = 0;
    uint32_t length = 0;
  };
  Table table(const char* tag) const;
  std::optional<Table> find_table(const char* tag) const;
  void load_glyph(uint16_t glyph, int depth, const double m[6], std::vector<Polyline>& out) const;

  std::vector<uint8_t> bytes_;
  std::vector<std::pair<uint32_t, Table>> tables_;
  int units_per_em_ = 0;
  int num_glyphs_ = 0;
  int index_to_loc_format_ = 0;
  uint32_t cmap_subtable_ = 0;
  bool cmap_symbol_ = false;
};

struct RasterOptions {
  /// Glyph bounding box is scaled to fit this fraction of the canvas.
  double box_fraction = 0.8;
  int supersample = 8;
  /// Stroke offset in output pixels: positive thickens, negative thins.
  double stroke_offset = 0.0;
};

/// Renders one letter centred by bounding box. kMissingGlyph when the letter
/// has no outline.
GlyphImage rasterize_glyph(const TrueTypeFont& font, char letter, int side, const RasterOptions& opts = {});
GlyphImage rasterize_glyph(const std::filesystem::path& font_file, char letter, int side,
                           const RasterOptions& opts = {});

}  // namespace glyphfusion
