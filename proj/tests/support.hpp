#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/evaluation.hpp"
#include "glyphfusion/image.hpp"
#include "glyphfusion/random.hpp"
#include "glyphfusion/style_encoder.hpp"

namespace gf_test {

namespace fs = std::filesystem;
using namespace glyphfusion;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

/// Uniform [0,1] intensities.
GlyphImage random_image(Rng& rng, int side);
/// Pixels are 0 or 1, ink with probability p.
GlyphImage random_binary_image(Rng& rng, int side, double p);
/// Filled axis-aligned box, inclusive bounds.
GlyphImage box_image(int side, int y0, int x0, int y1, int x1, float ink = 1.0f);

/// Minimal TrueType file: one square outline per letter of `letters`,
/// sized by letter so glyphs differ. Letters outside map to no glyph.
std::vector<uint8_t> synthetic_ttf(const std::string& letters, int units_per_em = 1000);
void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes);

/// <root>/<font_id>/<L>.png for every letter, with a font-specific
/// stroke width so fonts are distinguishable.
void write_png_font(const fs::path& root, const std::string& font_id, const std::string& letters, int side,
                    int stroke);
/// Writes fontinfo.csv rows "font_id,family,category,weight".
void write_fontinfo(const fs::path& root, const std::vector<std::vector<std::string>>& rows);

FannetConfig tiny_fannet_config(int side = 16, const Alphabet& alphabet = Alphabet());
StyleEncoder tiny_encoder(uint64_t seed, int side = 16, const Alphabet& alphabet = Alphabet());

DiffusionConfig tiny_diffusion_config(int T, int side = 16, const Alphabet& alphabet = Alphabet());
/// Untrained model whose weights, including the zero-initialised output
/// conv and the null tokens, are overwritten with small random values.
DiffusionModel randomized_model(const DiffusionConfig& cfg, uint64_t seed, const std::string& encoder_hash = "");

StyleVector random_style(Rng& rng, int dim);

}  // namespace gf_test
