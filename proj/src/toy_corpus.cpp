#include "glyphfusion/toy_corpus.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <set>
#include <sstream>

#include "glyphfusion/checkpoint.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/png_io.hpp"

namespace fs = std::filesystem;

namespace glyphfusion {

std::vector<fs::path> font_search_dirs() {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("GLYPHFUSION_FONT_DIRS")) {
    std::stringstream ss(env);
    std::string item;
    while (std::getline(ss, item, ':')) {
      if (!item.empty()) dirs.emplace_back(item);
    }
    return dirs;
  }
  dirs.emplace_back("/usr/share/fonts");
  dirs.emplace_back("/usr/local/share/fonts");
  for (const char* root : {"/usr/local/lib", "/usr/lib"}) {
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root, ec)) {
      const auto name = e.path().filename().string();
      if (!name.starts_with("python3")) continue;
      for (const char* site : {"dist-packages", "site-packages"}) {
        dirs.push_back(e.path() / site / "matplotlib" / "mpl-data" / "fonts" / "ttf");
        dirs.push_back(e.path() / site / "reportlab" / "fonts");
        dirs.push_back(e.path() / site / "marimo" / "_static" / "assets");
      }
    }
  }
  return dirs;
}

std::vector<fs::path> discover_fonts(const std::vector<fs::path>& dirs) {
  std::vector<fs::path> all;
  for (const auto& d : dirs) {
    std::error_code ec;
    if (!fs::is_directory(d, ec)) continue;
    for (auto it = fs::recursive_directory_iterator(d, ec); it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      auto ext = it->path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (it->is_regular_file() && ext == ".ttf") all.push_back(it->path());
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<fs::path> out;
  std::set<std::string> seen;
  for (const auto& p : all) {
    if (seen.insert(sha256_file(p)).second) out.push_back(p);
  }
  return out;
}

FontCategory guess_category(const std::string& name) {
  auto has = [&](const char* s) { return name.find(s) != std::string::npos; };
  if (has("Script") || has("Caligraphic") || has("Hand")) return FontCategory::kHandwriting;
  if (has("Fraktur") || has("Display") || has("AMS")) return FontCategory::kDisplay;
  if (has("Sans") || has("Vera") || has("cmss")) return FontCategory::kSansSerif;
  if (has("Serif") || has("STIX") || has("cmr") || has("cmb") || has("cmtt") || has("Main") || has("Math") ||
      has("cmmi") || has("Typewriter")) {
    return FontCategory::kSerif;
  }
  return FontCategory::kUnknown;
}

namespace {

std::string font_id_for(const fs::path& p) {
  std::string stem = p.stem().string();
  static const std::regex hashed(R"(^(.*-.*)[-.][A-Za-z0-9_-]{8}$)");
  std::smatch m;
  if (std::regex_match(stem, m, hashed)) stem = m[1].str();
  for (auto& c : stem) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return stem;
}

bool write_font(const fs::path& dir, const TrueTypeFont& font, const ToyCorpusOptions& o, double offset) {
  RasterOptions ro;
  ro.stroke_offset = offset;
  std::vector<GlyphImage> glyphs;
  for (char c : o.alphabet.letters()) glyphs.push_back(rasterize_glyph(font, c, o.canvas_side, ro));
  fs::create_directories(dir);
  for (size_t i = 0; i < glyphs.size(); ++i) {
    save_glyph_png(dir / (std::string(1, o.alphabet.letters()[i]) + ".png"), glyphs[i]);
  }
  return true;
}

}  // namespace

ToyCorpusSummary make_toy_corpus(const fs::path& out, const std::vector<fs::path>& fonts, const ToyCorpusOptions& o) {
  fs::create_directories(out);
  ToyCorpusSummary summary;
  std::vector<std::string> info_rows;
  std::set<std::string> ids;
  static const std::vector<std::string> kSynthPreference = {"DejaVuSerif", "DejaVuSans", "cmr10", "STIXGeneral",
                                                            "KaTeX_Main-Regular", "cmss10"};
  std::vector<std::pair<std::string, fs::path>> usable;

  for (const auto& p : fonts) {
    const std::string id = font_id_for(p);
    if (id == "cmex10") {
      summary.skipped.push_back({id, "symbol font"});
      continue;
    }
    if (ids.count(id)) {
      summary.skipped.push_back({id, "duplicate font id"});
      continue;
    }
    try {
      auto font = TrueTypeFont::load(p);
      for (char c : o.alphabet.letters()) rasterize_glyph(font, c, o.canvas_side);
      usable.emplace_back(id, p);
      ids.insert(id);
    } catch (const Error& e) {
      summary.skipped.push_back({id, e.what()});
    }
  }

  std::set<std::string> synth_bases;
  for (const auto& want : kSynthPreference) {
    if (static_cast<int>(synth_bases.size()) >= o.synth_families) break;
    for (const auto& [id, p] : usable) {
      if (id == want) synth_bases.insert(id);
    }
  }
  for (const auto& [id, p] : usable) {
    if (static_cast<int>(synth_bases.size()) >= o.synth_families) break;
    if (guess_category(id) != FontCategory::kUnknown && id.find("Bold") == std::string::npos &&
        id.find("Bol") == std::string::npos) {
      synth_bases.insert(id);
    }
  }

  for (const auto& [id, p] : usable) {
    auto font = TrueTypeFont::load(p);
    const auto category = to_string(guess_category(id));
    if (synth_bases.count(id)) {
      const std::string family = id + "-Synth";
      const std::vector<std::pair<const char*, double>> weights = {
          {"Light", o.light_offset}, {"Medium", 0.0}, {"Bold", o.bold_offset}};
      for (const auto& [wname, offset] : weights) {
        const std::string sid = family + "-" + wname;
        write_font(out / sid, font, o, offset);
        info_rows.push_back(sid + "," + family + "," + category + "," + wname);
        summary.fonts.push_back(sid);
      }
      continue;
    }
    write_font(out / id, font, o, 0.0);
    info_rows.push_back(id + "," + id + "," + category + ",Unspecified");
    summary.fonts.push_back(id);
  }
  std::sort(info_rows.begin(), info_rows.end());
  std::string csv = "font_id,family,category,weight\n";
  for (const auto& r : info_rows) csv += r + "\n";
  write_text_atomic(out / "fontinfo.csv", csv);
  std::sort(summary.fonts.begin(), summary.fonts.end());
  return summary;
}

}  // namespace glyphfusion
