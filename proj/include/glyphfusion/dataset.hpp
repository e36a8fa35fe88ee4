#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "glyphfusion/image.hpp"
#include "glyphfusion/random.hpp"
#include "glyphfusion/truetype.hpp"

namespace glyphfusion {

enum class FontCategory { kSerif, kSansSerif, kHandwriting, kDisplay, kUnknown };
enum class FontWeight { kLight, kMedium, kBold, kUnspecified };
enum class Split { kTrain, kVal, kTest };

std::string to_string(FontCategory c);
std::string to_string(FontWeight w);
std::string to_string(Split s);
FontCategory parse_category(const std::string& s);
FontWeight parse_weight(const std::string& s);

struct FontRecord {
  std::string font_id;
  std::string family;
  FontCategory category = FontCategory::kUnknown;
  FontWeight weight = FontWeight::kUnspecified;
  /// letter -> image path relative to the manifest's base directory.
  std::map<char, std::string> glyphs;

  bool operator==(const FontRecord&) const = default;
};

struct Manifest {
  std::vector<FontRecord> records;
  std::optional<Split> split;
  Alphabet alphabet;
  int canvas_side = 32;
  /// Directory the glyph paths are relative to.
  std::filesystem::path base_dir;

  /// Checks font_id and (family, weight) uniqueness and alphabet coverage.
  void validate() const;
  std::filesystem::path glyph_path(const FontRecord& rec, char letter) const;
  GlyphImage load_glyph(const FontRecord& rec, char letter) const;
  const FontRecord& find(const std::string& font_id) const;
};

struct Exclusion {
  std::string font_id;
  std::string reason;
};

struct ManifestBuild {
  Manifest manifest;
  std::vector<Exclusion> excluded;
};

struct ManifestOptions {
  Alphabet alphabet;
  int canvas_side = 32;
  /// Where glyphs rasterised from font files are written; defaults to
  /// <root>/_glyphs.
  std::filesystem::path glyph_dir;
  RasterOptions raster;
};

/// Scans `root` for per-font glyph directories (<font_id>/<letter>.png) and
/// TrueType files (*.ttf). Font files are rasterised into options.glyph_dir.
/// An optional <root>/fontinfo.csv (font_id,family,category,weight) overrides
/// metadata inferred from names. Fonts missing any alphabet letter, failing
/// to decode, or duplicating a (family, weight) pair are excluded and logged.
/// Throws kEmptyCorpus when nothing usable remains.
ManifestBuild build_manifest(const std::filesystem::path& root, const ManifestOptions& options);

/// Deterministic split by font_id. Ratios must be positive and sum to 1.
std::array<Manifest, 3> split_fonts(const Manifest& manifest, const std::array<double, 3>& ratios, uint64_t seed);

/// JSON-lines manifest: one FontRecord per line.
void write_manifest_jsonl(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest_jsonl(const std::filesystem::path& path, const Alphabet& alphabet, int canvas_side);

/// Translates by (dx, dy) pixels, filling uncovered area with background.
GlyphImage shift_image(const GlyphImage& img, int dx, int dy);

struct ShiftDecision {
  bool apply = false;
  int dx = 0;
  int dy = 0;
};

struct AugmentConfig {
  double prob = 0.3;
  double max_frac = 0.2;
};

/// One uniform draw picks the branch; two more pick the offsets, each in
/// [-floor(max_frac*side), +floor(max_frac*side)].
ShiftDecision draw_shift(Rng& rng, int side, const AugmentConfig& cfg = {});
GlyphImage augment_shift(const GlyphImage& img, Rng& rng, const AugmentConfig& cfg = {});

/// All glyphs of a manifest held in memory.
class GlyphDataset {
 public:
  explicit GlyphDataset(const Manifest& manifest);

  int64_t size() const noexcept { return static_cast<int64_t>(labels_.size()); }
  int num_fonts() const noexcept { return static_cast<int>(font_ids_.size()); }
  const Alphabet& alphabet() const noexcept { return alphabet_; }
  int canvas_side() const noexcept { return side_; }

  const GlyphImage& image(int64_t i) const { return images_[static_cast<size_t>(i)]; }
  int label(int64_t i) const { return labels_[static_cast<size_t>(i)]; }
  int font(int64_t i) const { return fonts_[static_cast<size_t>(i)]; }
  const std::string& font_id(int font) const { return font_ids_[static_cast<size_t>(font)]; }
  /// Sample index of (font, class).
  int64_t index_of(int font, int label) const;

  /// [N,1,H,W] ink tensor of the given samples, optionally shift-augmented.
  torch::Tensor images_tensor(const std::vector<int64_t>& idx, Rng* augment_rng = nullptr,
                              const AugmentConfig& cfg = {}) const;
  torch::Tensor labels_tensor(const std::vector<int64_t>& idx) const;

 private:
  Alphabet alphabet_;
  int side_ = 0;
  std::vector<GlyphImage> images_;
  std::vector<int> labels_;
  std::vector<int> fonts_;
  std::vector<std::string> font_ids_;
};

/// Epoch-shuffled batch indices; batch `step` depends only on (seed, step).
class BatchStream {
 public:
  BatchStream(int64_t dataset_size, int batch_size, uint64_t seed);
  std::vector<int64_t> batch(int64_t step) const;

 private:
  std::vector<int64_t> permutation(int64_t epoch) const;
  int64_t n_;
  int batch_;
  uint64_t seed_;
};

}  // namespace glyphfusion
