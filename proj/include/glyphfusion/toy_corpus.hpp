#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "glyphfusion/dataset.hpp"

namespace glyphfusion {

/// Directories searched for *.ttf: GLYPHFUSION_FONT_DIRS (colon separated) if
/// set, otherwise common system and Python package font folders.
std::vector<std::filesystem::path> font_search_dirs();
/// Every *.ttf below the directories, sorted, without byte-identical copies.
std::vector<std::filesystem::path> discover_fonts(const std::vector<std::filesystem::path>& dirs);

struct ToyCorpusOptions {
  int canvas_side = 32;
  Alphabet alphabet;
  /// Base fonts turned into light/medium/bold families via stroke offsets.
  int synth_families = 4;
  double light_offset = -0.45;
  double bold_offset = 0.6;
};

struct ToyCorpusSummary {
  std::vector<std::string> fonts;
  std::vector<Exclusion> skipped;
};

/// Writes <out>/<font_id>/<letter>.png per usable font plus fontinfo.csv.
ToyCorpusSummary make_toy_corpus(const std::filesystem::path& out, const std::vector<std::filesystem::path>& fonts,
                                 const ToyCorpusOptions& options);

/// Category guessed from a font name.
FontCategory guess_category(const std::string& name);

}  // namespace glyphfusion
