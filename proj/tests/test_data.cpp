#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "glyphfusion/dataset.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/png_io.hpp"
#include "glyphfusion/truetype.hpp"
#include "support.hpp"

using namespace glyphfusion;
using namespace gf_test;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a glyphfusion error");
  return ErrorKind::kInvalidArgument;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("model range endpoints and round trip") {
  GlyphImage img(4);
  img.set(0, 0, 1.0f);
  auto t = to_model_range(img);
  CHECK(t[0][0][0].item<float>() == 1.0f);
  CHECK(t[0][1][1].item<float>() == -1.0f);

  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto r = random_image(rng, 16);
    auto back = from_model_range(to_model_range(r));
    double worst = 0;
    for (size_t k = 0; k < r.pixels().size(); ++k)
      worst = std::max(worst, static_cast<double>(std::abs(r.pixels()[k] - back.pixels()[k])));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("image construction validates shape and range") {
  CHECK(kind_of([] { GlyphImage(3, 4, std::vector<float>(12, 0.f)); }) == ErrorKind::kShapeMismatch);
  CHECK(kind_of([] { GlyphImage(2, 2, std::vector<float>(3, 0.f)); }) == ErrorKind::kShapeMismatch);
  CHECK(kind_of([] { GlyphImage(2, 2, {0.f, 1.5f, 0.f, 0.f}); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { GlyphImage(2, 2, {0.f, NAN, 0.f, 0.f}); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { mse(GlyphImage(2), GlyphImage(3)); }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("mse symmetry, identity and bounds") {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    auto a = random_image(rng, 8), b = random_image(rng, 8);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(mse(a, a) == 0.0);
    CHECK(mse(a, b) > 0.0);
    CHECK(mse(a, b) <= 1.0);
  }
  GlyphImage blank(8), full(8, 8, std::vector<float>(64, 1.0f));
  CHECK(mse(blank, full) == 1.0);
}

TEST_CASE("alphabet is a bijection and one-hot has one 1") {
  Alphabet a;
  CHECK(a.size() == 26);
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.index_of(a.letter(i)) == i);
    auto oh = a.one_hot(a.char_class(i));
    CHECK(oh.sum().item<float>() == 1.0f);
    CHECK(oh[i].item<float>() == 1.0f);
  }
  CHECK_FALSE(a.contains('a'));
  CHECK_THROWS_AS(a.index_of('?'), Error);
  CHECK_THROWS_AS(Alphabet("ABA"), Error);
}

TEST_CASE("png round trip preserves 8-bit values and polarity") {
  TempDir dir("png");
  GlyphImage img(8);
  img.set(2, 3, 1.0f);
  img.set(4, 4, 128.0f / 255.0f);
  save_glyph_png(dir / "g.png", img);
  auto raw = read_png(dir / "g.png");
  CHECK(raw.data[2 * 8 + 3] == 0);
  CHECK(raw.data[0] == 255);
  auto back = load_glyph_png(dir / "g.png");
  CHECK(back.at(2, 3) == 1.0f);
  CHECK(back.at(4, 4) == doctest::Approx(128.0 / 255.0).epsilon(1e-6));
  save_glyph_png(dir / "h.png", back);
  CHECK(slurp(dir / "g.png") == slurp(dir / "h.png"));
  CHECK_THROWS_AS(read_png(dir / "missing.png"), Error);
}

}  // TEST_SUITE

TEST_SUITE("augment") {

TEST_CASE("no-shift branch returns the input unchanged") {
  Rng rng(0);
  auto img = box_image(32, 8, 8, 20, 20);
  int seen = 0;
  for (uint64_t seed = 0; seed < 50 && seen < 5; ++seed) {
    Rng probe(seed);
    if (draw_shift(probe, 32).apply) continue;
    Rng r(seed);
    CHECK(augment_shift(img, r) == img);
    ++seen;
  }
  CHECK(seen == 5);
}

TEST_CASE("shift keeps on-canvas ink and drops the rest") {
  auto img = box_image(32, 4, 20, 12, 30);
  auto moved = shift_image(img, 6, 0);
  // Columns 26..30 move to 32..36 and fall off; 20..25 survive.
  CHECK(moved.ink_mass() == doctest::Approx(9.0 * 6.0));
  CHECK(moved.at(4, 26) == 1.0f);
  CHECK(moved.at(4, 25) == 0.0f);
  auto inside = box_image(32, 4, 4, 10, 10);
  CHECK(shift_image(inside, 6, 0).ink_mass() == inside.ink_mass());
  CHECK(shift_image(inside, 0, -3).at(1, 4) == 1.0f);
}

TEST_CASE("augmentation never changes size or range") {
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    auto img = random_image(rng, 16);
    auto out = augment_shift(img, rng);
    REQUIRE(out.side() == 16);
    for (float v : out.pixels()) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("augmentation rate is 0.3 within 3 sigma over 10^4 draws") {
  const int n = 10000;
  Rng rng(derive_seed(1, "rate"));
  int applied = 0, max_off = 0;
  for (int i = 0; i < n; ++i) {
    auto d = draw_shift(rng, 32);
    applied += d.apply ? 1 : 0;
    max_off = std::max({max_off, std::abs(d.dx), std::abs(d.dy)});
  }
  const double rate = static_cast<double>(applied) / n;
  const double sigma = std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(rate - 0.3) <= 3 * sigma);
  CHECK(std::abs(rate - 0.3) <= 0.02);
  CHECK(max_off == 6);
}

}  // TEST_SUITE

TEST_SUITE("dataset") {

TEST_CASE("manifest from complete and incomplete fonts") {
  TempDir root("corpus");
  const std::string all = Alphabet().letters();
  write_png_font(root.path(), "alpha-Regular", all, 16, 1);
  write_png_font(root.path(), "beta-Regular", all, 16, 2);
  write_png_font(root.path(), "gamma-Regular", all.substr(0, 25), 16, 3);
  ManifestOptions opt;
  opt.canvas_side = 16;
  auto built = build_manifest(root.path(), opt);
  CHECK(built.manifest.records.size() == 2);
  REQUIRE(built.excluded.size() == 1);
  CHECK(built.excluded[0].font_id == "gamma-Regular");

  write_png_font(root.path(), "gamma-Regular", "Z", 16, 3);
  CHECK(build_manifest(root.path(), opt).manifest.records.size() == 3);
}

TEST_CASE("empty or missing corpus directories fail") {
  TempDir root("empty");
  ManifestOptions opt;
  CHECK(kind_of([&] { build_manifest(root.path(), opt); }) == ErrorKind::kEmptyCorpus);
  CHECK(kind_of([&] { build_manifest(root / "nope", opt); }) == ErrorKind::kIo);
}

TEST_CASE("fontinfo metadata and duplicate family-weight pairs") {
  TempDir root("meta");
  const std::string all = Alphabet().letters();
  write_png_font(root.path(), "fam-Light", all, 16, 1);
  write_png_font(root.path(), "fam-Bold", all, 16, 3);
  write_png_font(root.path(), "fam-Bold2", all, 16, 4);
  write_fontinfo(root.path(), {{"fam-Light", "Fam", "serif", "light"},
                               {"fam-Bold", "Fam", "serif", "bold"},
                               {"fam-Bold2", "Fam", "serif", "bold"}});
  ManifestOptions opt;
  opt.canvas_side = 16;
  auto built = build_manifest(root.path(), opt);
  CHECK(built.manifest.records.size() == 2);
  CHECK(built.excluded.size() == 1);
  const auto& light = built.manifest.find("fam-Light");
  CHECK(light.family == "Fam");
  CHECK(light.category == FontCategory::kSerif);
  CHECK(light.weight == FontWeight::kLight);
  built.manifest.validate();
}

TEST_CASE("wrong canvas size is excluded, not silently resized") {
  TempDir root("size");
  write_png_font(root.path(), "a-Regular", Alphabet().letters(), 16, 1);
  write_png_font(root.path(), "b-Regular", Alphabet().letters(), 24, 1);
  ManifestOptions opt;
  opt.canvas_side = 16;
  auto built = build_manifest(root.path(), opt);
  CHECK(built.manifest.records.size() == 1);
  CHECK(built.excluded.size() == 1);
}

Manifest synthetic_manifest(int n) {
  Manifest m;
  for (int i = 0; i < n; ++i) {
    FontRecord r;
    r.font_id = "font" + std::to_string(100 + i);
    r.family = r.font_id;
    m.records.push_back(r);
  }
  return m;
}

TEST_CASE("split sizes, determinism and disjointness") {
  auto m = synthetic_manifest(10);
  auto s = split_fonts(m, {0.8, 0.1, 0.1}, 0);
  CHECK(s[0].records.size() == 8);
  CHECK(s[1].records.size() == 1);
  CHECK(s[2].records.size() == 1);
  auto again = split_fonts(m, {0.8, 0.1, 0.1}, 0);
  for (int i = 0; i < 3; ++i) CHECK((s[i].records == again[i].records));

  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto big = synthetic_manifest(37);
    auto parts = split_fonts(big, {0.7, 0.2, 0.1}, seed);
    std::set<std::string> seen;
    size_t total = 0;
    for (const auto& p : parts) {
      for (const auto& r : p.records) seen.insert(r.font_id);
      total += p.records.size();
    }
    CHECK(total == 37);
    CHECK(seen.size() == 37);
  }
  CHECK((split_fonts(m, {0.8, 0.1, 0.1}, 1)[0].records != s[0].records));
}

TEST_CASE("too few fonts and bad ratios") {
  CHECK(kind_of([] { split_fonts(synthetic_manifest(2), {0.8, 0.1, 0.1}, 0); }) == ErrorKind::kTooFewFonts);
  CHECK(kind_of([] { split_fonts(synthetic_manifest(10), {0.8, 0.1, 0.2}, 0); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { split_fonts(synthetic_manifest(10), {1.0, 0.0, 0.0}, 0); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("manifest jsonl round trip") {
  TempDir root("jsonl");
  const std::string all = Alphabet().letters();
  write_png_font(root.path(), "x-Regular", all, 16, 1);
  write_png_font(root.path(), "y-Bold", all, 16, 2);
  ManifestOptions opt;
  opt.canvas_side = 16;
  auto m = build_manifest(root.path(), opt).manifest;
  write_manifest_jsonl(root / "out/m.jsonl", m);
  auto back = read_manifest_jsonl(root / "out/m.jsonl", m.alphabet, 16);
  REQUIRE(back.records.size() == m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].font_id == m.records[i].font_id);
    CHECK(back.records[i].weight == m.records[i].weight);
    CHECK(back.load_glyph(back.records[i], 'Q') == m.load_glyph(m.records[i], 'Q'));
  }
}

TEST_CASE("batch stream depends only on seed and step") {
  BatchStream a(103, 16, 9), b(103, 16, 9), c(103, 16, 10);
  for (int64_t step : {0, 5, 6, 7, 40}) CHECK(a.batch(step) == b.batch(step));
  CHECK(a.batch(3) != c.batch(3));
  std::set<int64_t> epoch;
  for (int64_t step = 0; step < 6; ++step)
    for (auto i : a.batch(step)) epoch.insert(i);
  CHECK(epoch.size() == 96);
}

}  // TEST_SUITE

TEST_SUITE("rasterizer") {

TEST_CASE("synthetic font renders letters deterministically") {
  TrueTypeFont font(synthetic_ttf("ABCDEFGHIJKLMNOPRSTUVWXYZ"));
  CHECK(font.units_per_em() == 1000);
  auto a = rasterize_glyph(font, 'A', 32);
  CHECK(a.side() == 32);
  CHECK(a.ink_fraction() > 0.0);
  CHECK(a.ink_fraction() < 1.0);
  CHECK(rasterize_glyph(font, 'A', 32) == a);
  CHECK(rasterize_glyph(font, 'B', 32) != a);
  CHECK(kind_of([&] { rasterize_glyph(font, 'Q', 32); }) == ErrorKind::kMissingGlyph);
}

TEST_CASE("glyph box respects the margin") {
  TrueTypeFont font(synthetic_ttf("A"));
  auto a = rasterize_glyph(font, 'A', 40);
  for (int y = 0; y < 40; ++y) {
    CHECK(a.at(y, 0) == 0.0f);
    CHECK(a.at(y, 39) == 0.0f);
  }
  CHECK(a.at(20, 20) > 0.99f);
}

TEST_CASE("stroke offset thickens and thins") {
  TrueTypeFont font(synthetic_ttf("A"));
  RasterOptions thin, bold;
  thin.stroke_offset = -0.5;
  bold.stroke_offset = 0.6;
  const double base = rasterize_glyph(font, 'A', 32).ink_mass();
  CHECK(rasterize_glyph(font, 'A', 32, thin).ink_mass() < base);
  CHECK(rasterize_glyph(font, 'A', 32, bold).ink_mass() > base);
}

TEST_CASE("corrupt font data fails to decode") {
  auto good = synthetic_ttf("AB");
  CHECK(kind_of([] { TrueTypeFont(std::vector<uint8_t>{1, 2, 3}); }) == ErrorKind::kDecodeFailure);
  auto truncated = good;
  truncated.resize(good.size() / 2);
  CHECK(kind_of([&] { TrueTypeFont{truncated}; }) == ErrorKind::kDecodeFailure);
  auto otto = good;
  otto[0] = 'O', otto[1] = 'T', otto[2] = 'T', otto[3] = 'O';
  CHECK(kind_of([&] { TrueTypeFont{otto}; }) == ErrorKind::kDecodeFailure);
  TempDir dir("ttf");
  write_bytes(dir / "bad.ttf", {0, 1, 0, 0, 0, 9});
  CHECK(kind_of([&] { rasterize_glyph(dir / "bad.ttf", 'A', 16); }) == ErrorKind::kDecodeFailure);
}

TEST_CASE("font files in a corpus are rasterised and bad ones excluded") {
  TempDir root("ttfcorpus");
  const std::string all = Alphabet().letters();
  write_bytes(root / "One-Regular.ttf", synthetic_ttf(all));
  write_bytes(root / "Two-Regular.ttf", synthetic_ttf(all, 2048));
  write_bytes(root / "NoQ-Regular.ttf", synthetic_ttf("ABCDEFGHIJKLMNOPRSTUVWXYZ"));
  write_bytes(root / "Broken-Regular.ttf", {0, 1, 0, 0});
  ManifestOptions opt;
  opt.canvas_side = 16;
  auto built = build_manifest(root.path(), opt);
  CHECK(built.manifest.records.size() == 2);
  CHECK(built.excluded.size() == 2);
  auto img = built.manifest.load_glyph(built.manifest.records[0], 'M');
  CHECK(img.side() == 16);
  CHECK(img.ink_fraction() > 0.0);
}

}  // TEST_SUITE
