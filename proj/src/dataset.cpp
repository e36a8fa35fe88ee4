#include "glyphfusion/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "glyphfusion/error.hpp"
#include "glyphfusion/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace glyphfusion {

std::string to_string(FontCategory c) {
  switch (c) {
    case FontCategory::kSerif: return "Serif";
    case FontCategory::kSansSerif: return "SansSerif";
    case FontCategory::kHandwriting: return "Handwriting";
    case FontCategory::kDisplay: return "Display";
    case FontCategory::kUnknown: return "Unknown";
  }
  return "Unknown";
}

std::string to_string(FontWeight w) {
  switch (w) {
    case FontWeight::kLight: return "Light";
    case FontWeight::kMedium: return "Medium";
    case FontWeight::kBold: return "Bold";
    case FontWeight::kUnspecified: return "Unspecified";
  }
  return "Unspecified";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

namespace {

std::string fold_name(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (std::isalnum(static_cast<unsigned char>(ch))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

}  // namespace

FontCategory parse_category(const std::string& s) {
  const auto k = fold_name(s);
  if (k == "serif" || k == "s") return FontCategory::kSerif;
  if (k == "sansserif" || k == "sans" || k == "ss") return FontCategory::kSansSerif;
  if (k == "handwriting" || k == "h") return FontCategory::kHandwriting;
  if (k == "display" || k == "d") return FontCategory::kDisplay;
  if (k == "unknown" || k == "u" || k.empty()) return FontCategory::kUnknown;
  raise(ErrorKind::kInvalidArgument, "unknown font category '" + s + "'");
}

FontWeight parse_weight(const std::string& s) {
  const auto k = fold_name(s);
  if (k == "light") return FontWeight::kLight;
  if (k == "medium") return FontWeight::kMedium;
  if (k == "bold") return FontWeight::kBold;
  if (k == "unspecified" || k.empty()) return FontWeight::kUnspecified;
  raise(ErrorKind::kInvalidArgument, "unknown font weight '" + s + "'");
}

void Manifest::validate() const {
  std::set<std::string> ids;
  std::set<std::pair<std::string, FontWeight>> family_weights;
  for (const auto& r : records) {
    require(ids.insert(r.font_id).second, ErrorKind::kInvalidArgument, "duplicate font_id " + r.font_id);
    require(family_weights.insert({r.family, r.weight}).second, ErrorKind::kInvalidArgument,
            "duplicate (family, weight) for " + r.font_id);
    for (char c : alphabet.letters()) {
      require(r.glyphs.count(c) == 1, ErrorKind::kInvalidArgument,
              "font " + r.font_id + " lacks letter " + std::string(1, c));
    }
  }
}

fs::path Manifest::glyph_path(const FontRecord& rec, char letter) const {
  auto it = rec.glyphs.find(letter);
  require(it != rec.glyphs.end(), ErrorKind::kMissingGlyph,
          "font " + rec.font_id + " has no glyph " + std::string(1, letter));
  return base_dir / it->second;
}

GlyphImage Manifest::load_glyph(const FontRecord& rec, char letter) const {
  auto img = load_glyph_png(glyph_path(rec, letter));
  require(img.side() == canvas_side, ErrorKind::kShapeMismatch,
          "glyph " + glyph_path(rec, letter).string() + " is not " + std::to_string(canvas_side) + "px");
  return img;
}

const FontRecord& Manifest::find(const std::string& font_id) const {
  for (const auto& r : records) {
    if (r.font_id == font_id) return r;
  }
  raise(ErrorKind::kInvalidArgument, "font " + font_id + " not in manifest");
}

namespace {

struct FontInfo {
  std::string family;
  FontCategory category = FontCategory::kUnknown;
  FontWeight weight = FontWeight::kUnspecified;
};

std::map<std::string, FontInfo> read_fontinfo(const fs::path& root) {
  std::map<std::string, FontInfo> info;
  const fs::path p = root / "fontinfo.csv";
  if (!fs::exists(p)) return info;
  std::ifstream in(p);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("font_id", 0) == 0) continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    require(cols.size() == 4, ErrorKind::kConfig, "fontinfo.csv rows need font_id,family,category,weight");
    info[cols[0]] = FontInfo{cols[1], parse_category(cols[2]), parse_weight(cols[3])};
  }
  return info;
}

FontInfo infer_info(const std::string& stem) {
  static const std::vector<std::pair<std::string, FontWeight>> kTokens = {
      {"ExtraLight", FontWeight::kLight}, {"Light", FontWeight::kLight}, {"Thin", FontWeight::kLight},
      {"Medium", FontWeight::kMedium},    {"Bold", FontWeight::kBold},   {"Bol", FontWeight::kBold},
      {"Bd", FontWeight::kBold},
  };
  FontInfo info{stem, FontCategory::kUnknown, FontWeight::kUnspecified};
  for (const auto& [token, weight] : kTokens) {
    auto pos = stem.find(token);
    if (pos == std::string::npos) continue;
    std::string family = stem.substr(0, pos) + stem.substr(pos + token.size());
    while (!family.empty() && family.back() == '-') family.pop_back();
    auto dd = family.find("--");
    if (dd != std::string::npos) family.erase(dd, 1);
    info.family = family.empty() ? stem : family;
    info.weight = weight;
    break;
  }
  return info;
}

std::string generic_relative(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

}  // namespace

ManifestBuild build_manifest(const fs::path& root, const ManifestOptions& options) {
  require(fs::is_directory(root), ErrorKind::kIo, "corpus root " + root.string() + " is not a directory");
  const fs::path glyph_dir = options.glyph_dir.empty() ? root / "_glyphs" : options.glyph_dir;
  const auto info = read_fontinfo(root);
  const fs::path glyph_canon = fs::weakly_canonical(glyph_dir);

  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.path().filename().string().starts_with(".")) continue;
    if (fs::weakly_canonical(e.path()) == glyph_canon) continue;
    entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());

  ManifestBuild out;
  out.manifest.alphabet = options.alphabet;
  out.manifest.canvas_side = options.canvas_side;
  out.manifest.base_dir = fs::weakly_canonical(root);
  std::set<std::pair<std::string, FontWeight>> family_weights;
  std::set<std::string> ids;

  auto exclude = [&](const std::string& id, const std::string& why) {
    out.excluded.push_back({id, why});
    log_warn("excluding font " + id + ": " + why);
  };

  for (const auto& path : entries) {
    const bool is_dir = fs::is_directory(path);
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (!is_dir && ext != ".ttf") continue;
    const std::string font_id = is_dir ? path.filename().string() : path.stem().string();

    FontRecord rec;
    rec.font_id = font_id;
    try {
      if (is_dir) {
        for (char c : options.alphabet.letters()) {
          const fs::path p = path / (std::string(1, c) + ".png");
          require(fs::exists(p), ErrorKind::kMissingGlyph, std::string("missing letter ") + c);
          auto img = load_glyph_png(p);
          require(img.side() == options.canvas_side, ErrorKind::kShapeMismatch,
                  p.filename().string() + " is not " + std::to_string(options.canvas_side) + "px");
          rec.glyphs[c] = generic_relative(p, out.manifest.base_dir);
        }
      } else {
        auto font = TrueTypeFont::load(path);
        std::vector<GlyphImage> glyphs;
        for (char c : options.alphabet.letters()) glyphs.push_back(rasterize_glyph(font, c, options.canvas_side, options.raster));
        const fs::path dir = glyph_dir / font_id;
        fs::create_directories(dir);
        for (size_t i = 0; i < glyphs.size(); ++i) {
          const char c = options.alphabet.letters()[i];
          const fs::path p = dir / (std::string(1, c) + ".png");
          save_glyph_png(p, glyphs[i]);
          rec.glyphs[c] = generic_relative(fs::weakly_canonical(p), out.manifest.base_dir);
        }
      }
    } catch (const Error& e) {
      exclude(font_id, e.what());
      continue;
    }

    if (auto it = info.find(font_id); it != info.end()) {
      rec.family = it->second.family;
      rec.category = it->second.category;
      rec.weight = it->second.weight;
    } else {
      auto inferred = infer_info(font_id);
      rec.family = inferred.family;
      rec.weight = inferred.weight;
    }
    if (!ids.insert(font_id).second) {
      exclude(font_id, "duplicate font_id");
      continue;
    }
    if (!family_weights.insert({rec.family, rec.weight}).second) {
      exclude(font_id, "duplicate (family, weight) = (" + rec.family + ", " + to_string(rec.weight) + ")");
      continue;
    }
    out.manifest.records.push_back(std::move(rec));
  }
  require(!out.manifest.records.empty(), ErrorKind::kEmptyCorpus, "no usable fonts under " + root.string());
  log_info("manifest: " + std::to_string(out.manifest.records.size()) + " fonts, " +
           std::to_string(out.excluded.size()) + " excluded");
  return out;
}

std::array<Manifest, 3> split_fonts(const Manifest& manifest, const std::array<double, 3>& ratios, uint64_t seed) {
  for (double r : ratios) require(r > 0.0, ErrorKind::kInvalidArgument, "split ratios must be positive");
  require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9, ErrorKind::kInvalidArgument,
          "split ratios must sum to 1");
  const auto n = static_cast<int64_t>(manifest.records.size());
  const auto n_val = static_cast<int64_t>(std::llround(static_cast<double>(n) * ratios[1]));
  const auto n_test = static_cast<int64_t>(std::llround(static_cast<double>(n) * ratios[2]));
  const int64_t n_train = n - n_val - n_test;
  require(n_train > 0 && n_val > 0 && n_test > 0, ErrorKind::kTooFewFonts,
          std::to_string(n) + " fonts cannot fill all three splits");

  std::vector<const FontRecord*> order;
  for (const auto& r : manifest.records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->font_id < b->font_id; });
  Rng rng(seed);
  for (int64_t i = n - 1; i > 0; --i) {
    auto j = static_cast<int64_t>(uniform_below(rng, static_cast<uint64_t>(i) + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  std::array<Manifest, 3> out;
  const std::array<Split, 3> kinds{Split::kTrain, Split::kVal, Split::kTest};
  const std::array<int64_t, 3> counts{n_train, n_val, n_test};
  size_t pos = 0;
  for (size_t s = 0; s < 3; ++s) {
    out[s].split = kinds[s];
    out[s].alphabet = manifest.alphabet;
    out[s].canvas_side = manifest.canvas_side;
    out[s].base_dir = manifest.base_dir;
    for (int64_t k = 0; k < counts[s]; ++k) out[s].records.push_back(*order[pos++]);
    std::sort(out[s].records.begin(), out[s].records.end(),
              [](const auto& a, const auto& b) { return a.font_id < b.font_id; });
  }
  return out;
}

void write_manifest_jsonl(const fs::path& path, const Manifest& manifest) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path dir = fs::weakly_canonical(path).parent_path();
  std::ostringstream os;
  for (const auto& r : manifest.records) {
    json glyphs = json::object();
    for (const auto& [c, rel] : r.glyphs) {
      glyphs[std::string(1, c)] = fs::relative(fs::weakly_canonical(manifest.base_dir / rel), dir).generic_string();
    }
    json line = {{"font_id", r.font_id},
                 {"family", r.family},
                 {"category", to_string(r.category)},
                 {"weight", to_string(r.weight)},
                 {"glyphs", glyphs}};
    os << line.dump() << '\n';
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    out << os.str();
  }
  fs::rename(tmp, path);
}

Manifest read_manifest_jsonl(const fs::path& path, const Alphabet& alphabet, int canvas_side) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read manifest " + path.string());
  Manifest m;
  m.alphabet = alphabet;
  m.canvas_side = canvas_side;
  m.base_dir = fs::weakly_canonical(path).parent_path();
  const std::string name = path.stem().string();
  if (name == "train") m.split = Split::kTrain;
  if (name == "val") m.split = Split::kVal;
  if (name == "test") m.split = Split::kTest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      raise(ErrorKind::kDecodeFailure, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    FontRecord r;
    r.font_id = j.at("font_id").get<std::string>();
    r.family = j.value("family", r.font_id);
    r.category = parse_category(j.value("category", "Unknown"));
    r.weight = parse_weight(j.value("weight", "Unspecified"));
    for (const auto& [k, v] : j.at("glyphs").items()) {
      require(k.size() == 1, ErrorKind::kDecodeFailure, "glyph keys must be single letters");
      r.glyphs[k[0]] = v.get<std::string>();
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

GlyphImage shift_image(const GlyphImage& img, int dx, int dy) {
  const int n = img.side();
  GlyphImage out(n);
  for (int y = 0; y < n; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= n) continue;
    for (int x = 0; x < n; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= n) continue;
      out.set(y, x, img.at(sy, sx));
    }
  }
  return out;
}

ShiftDecision draw_shift(Rng& rng, int side, const AugmentConfig& cfg) {
  ShiftDecision d;
  if (uniform01(rng) >= cfg.prob) return d;
  const int max_shift = static_cast<int>(std::floor(cfg.max_frac * side));
  d.apply = true;
  d.dx = static_cast<int>(uniform_int(rng, -max_shift, max_shift));
  d.dy = static_cast<int>(uniform_int(rng, -max_shift, max_shift));
  return d;
}

GlyphImage augment_shift(const GlyphImage& img, Rng& rng, const AugmentConfig& cfg) {
  const auto d = draw_shift(rng, img.side(), cfg);
  if (!d.apply) return img;
  return shift_image(img, d.dx, d.dy);
}

GlyphDataset::GlyphDataset(const Manifest& manifest) : alphabet_(manifest.alphabet), side_(manifest.canvas_side) {
  require(!manifest.records.empty(), ErrorKind::kEmptyCorpus, "dataset manifest is empty");
  for (const auto& rec : manifest.records) {
    const int font = static_cast<int>(font_ids_.size());
    font_ids_.push_back(rec.font_id);
    for (int c = 0; c < alphabet_.size(); ++c) {
      images_.push_back(manifest.load_glyph(rec, alphabet_.letter(c)));
      labels_.push_back(c);
      fonts_.push_back(font);
    }
  }
}

int64_t GlyphDataset::index_of(int font, int label) const {
  require(font >= 0 && font < num_fonts() && label >= 0 && label < alphabet_.size(), ErrorKind::kInvalidArgument,
          "dataset index out of range");
  return static_cast<int64_t>(font) * alphabet_.size() + label;
}

torch::Tensor GlyphDataset::images_tensor(const std::vector<int64_t>& idx, Rng* augment_rng,
                                          const AugmentConfig& cfg) const {
  auto out = torch::empty({static_cast<int64_t>(idx.size()), 1, side_, side_});
  float* dst = out.data_ptr<float>();
  const size_t plane = static_cast<size_t>(side_) * side_;
  for (size_t i = 0; i < idx.size(); ++i) {
    const GlyphImage& src = images_[static_cast<size_t>(idx[i])];
    if (augment_rng != nullptr) {
      auto aug = augment_shift(src, *augment_rng, cfg);
      std::copy(aug.pixels().begin(), aug.pixels().end(), dst + i * plane);
    } else {
      std::copy(src.pixels().begin(), src.pixels().end(), dst + i * plane);
    }
  }
  return out;
}

torch::Tensor GlyphDataset::labels_tensor(const std::vector<int64_t>& idx) const {
  auto out = torch::empty({static_cast<int64_t>(idx.size())}, torch::kInt64);
  auto* p = out.data_ptr<int64_t>();
  for (size_t i = 0; i < idx.size(); ++i) p[i] = labels_[static_cast<size_t>(idx[i])];
  return out;
}

BatchStream::BatchStream(int64_t dataset_size, int batch_size, uint64_t seed)
    : n_(dataset_size), batch_(batch_size), seed_(seed) {
  require(n_ > 0 && batch_ > 0, ErrorKind::kInvalidArgument, "batch stream needs data and a positive batch size");
}

std::vector<int64_t> BatchStream::permutation(int64_t epoch) const {
  std::vector<int64_t> p(static_cast<size_t>(n_));
  for (int64_t i = 0; i < n_; ++i) p[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed_, "epoch", static_cast<uint64_t>(epoch)));
  for (int64_t i = n_ - 1; i > 0; --i) {
    auto j = static_cast<int64_t>(uniform_below(rng, static_cast<uint64_t>(i) + 1));
    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
  }
  return p;
}

std::vector<int64_t> BatchStream::batch(int64_t step) const {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(batch_));
  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  for (int64_t i = 0; i < batch_; ++i) {
    const int64_t g = step * batch_ + i;
    const int64_t epoch = g / n_;
    if (epoch != cached_epoch) {
      perm = permutation(epoch);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<size_t>(g % n_)]);
  }
  return out;
}

}  // namespace glyphfusion
