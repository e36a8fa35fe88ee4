#include "support.hpp"

#include <atomic>
#include <fstream>

#include <unistd.h>

#include "glyphfusion/png_io.hpp"

namespace gf_test {

namespace {

std::atomic<int> g_counter{0};

void put_u16(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  put_u16(b, v >> 16);
  put_u16(b, v & 0xFFFFu);
}

void set_u16(std::vector<uint8_t>& b, size_t at, uint32_t v) {
  b[at] = static_cast<uint8_t>(v >> 8);
  b[at + 1] = static_cast<uint8_t>(v);
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
  path_ = fs::temp_directory_path() /
          ("gf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(g_counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

GlyphImage random_image(Rng& rng, int side) {
  std::vector<float> px(static_cast<size_t>(side) * side);
  for (auto& v : px) v = static_cast<float>(uniform01(rng));
  return GlyphImage(side, side, std::move(px));
}

GlyphImage random_binary_image(Rng& rng, int side, double p) {
  std::vector<float> px(static_cast<size_t>(side) * side);
  for (auto& v : px) v = uniform01(rng) < p ? 1.0f : 0.0f;
  return GlyphImage(side, side, std::move(px));
}

GlyphImage box_image(int side, int y0, int x0, int y1, int x1, float ink) {
  GlyphImage img(side);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img.set(y, x, ink);
  return img;
}

std::vector<uint8_t> synthetic_ttf(const std::string& letters, int units_per_em) {
  const auto n_glyphs = static_cast<uint32_t>(letters.size() + 1);

  std::vector<uint8_t> glyf;
  std::vector<uint32_t> loca{0, 0};
  for (size_t k = 0; k < letters.size(); ++k) {
    const int x0 = 100, y0 = 0;
    const int x1 = 500 + 15 * static_cast<int>(k);
    const int y1 = 700 - 10 * static_cast<int>(k);
    put_u16(glyf, 1);
    put_u16(glyf, static_cast<uint16_t>(x0));
    put_u16(glyf, static_cast<uint16_t>(y0));
    put_u16(glyf, static_cast<uint16_t>(x1));
    put_u16(glyf, static_cast<uint16_t>(y1));
    put_u16(glyf, 3);
    put_u16(glyf, 0);
    for (int i = 0; i < 4; ++i) glyf.push_back(0x01);
    const int xs[4] = {x0, x0, x1, x1};
    const int ys[4] = {y0, y1, y1, y0};
    int prev = 0;
    for (int x : xs) {
      put_u16(glyf, static_cast<uint16_t>(static_cast<int16_t>(x - prev)));
      prev = x;
    }
    prev = 0;
    for (int y : ys) {
      put_u16(glyf, static_cast<uint16_t>(static_cast<int16_t>(y - prev)));
      prev = y;
    }
    loca.push_back(static_cast<uint32_t>(glyf.size()));
  }

  std::vector<uint8_t> head(54, 0);
  set_u16(head, 0, 1);
  set_u16(head, 18, static_cast<uint32_t>(units_per_em));
  set_u16(head, 50, 1);

  std::vector<uint8_t> maxp;
  put_u32(maxp, 0x00005000u);
  put_u16(maxp, n_glyphs);

  std::vector<uint8_t> loca_bytes;
  for (uint32_t off : loca) put_u32(loca_bytes, off);

  std::vector<uint8_t> cmap;
  put_u16(cmap, 0);
  put_u16(cmap, 1);
  put_u16(cmap, 3);
  put_u16(cmap, 1);
  put_u32(cmap, 12);
  put_u16(cmap, 6);
  put_u16(cmap, 10 + 2 * 26);
  put_u16(cmap, 0);
  put_u16(cmap, 'A');
  put_u16(cmap, 26);
  for (char c = 'A'; c <= 'Z'; ++c) {
    const auto pos = letters.find(c);
    put_u16(cmap, pos == std::string::npos ? 0u : static_cast<uint32_t>(pos + 1));
  }

  const std::vector<std::pair<std::string, std::vector<uint8_t>*>> tables{
      {"cmap", &cmap}, {"glyf", &glyf}, {"head", &head}, {"loca", &loca_bytes}, {"maxp", &maxp}};
  std::vector<uint8_t> out;
  put_u32(out, 0x00010000u);
  put_u16(out, static_cast<uint32_t>(tables.size()));
  put_u16(out, 0);
  put_u16(out, 0);
  put_u16(out, 0);
  uint32_t offset = 12 + 16 * static_cast<uint32_t>(tables.size());
  for (const auto& [tag, data] : tables) {
    for (char ch : tag) out.push_back(static_cast<uint8_t>(ch));
    put_u32(out, 0);
    put_u32(out, offset);
    put_u32(out, static_cast<uint32_t>(data->size()));
    offset += (static_cast<uint32_t>(data->size()) + 3u) & ~3u;
  }
  for (const auto& [tag, data] : tables) {
    out.insert(out.end(), data->begin(), data->end());
    while (out.size() % 4 != 0) out.push_back(0);
  }
  return out;
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_png_font(const fs::path& root, const std::string& font_id, const std::string& letters, int side,
                    int stroke) {
  const fs::path dir = root / font_id;
  fs::create_directories(dir);
  const int lo = side / 8, hi = side - 1 - side / 8;
  const int cell = (hi - lo + 1) / 4;
  for (size_t k = 0; k < letters.size(); ++k) {
    GlyphImage img(side);
    for (int y = lo; y <= hi; ++y)
      for (int x = lo; x <= hi; ++x)
        if (y < lo + stroke || y > hi - stroke || x < lo + stroke || x > hi - stroke) img.set(y, x, 1.0f);
    uint32_t bits = static_cast<uint32_t>(k + 1) * 2654435761u;
    for (int c = 0; c < 16; ++c) {
      if (!((bits >> (c + 8)) & 1u)) continue;
      const int cy = lo + (c / 4) * cell, cx = lo + (c % 4) * cell;
      for (int y = cy; y < cy + cell; ++y)
        for (int x = cx; x < cx + cell; ++x) img.set(y, x, 1.0f);
    }
    save_glyph_png(dir / (std::string(1, letters[k]) + ".png"), img);
  }
}

void write_fontinfo(const fs::path& root, const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(root / "fontinfo.csv");
  os << "font_id,family,category,weight\n";
  for (const auto& r : rows) os << r.at(0) << ',' << r.at(1) << ',' << r.at(2) << ',' << r.at(3) << '\n';
}

FannetConfig tiny_fannet_config(int side, const Alphabet& alphabet) {
  FannetConfig cfg;
  cfg.style_dim = 8;
  cfg.base_channels = 4;
  cfg.canvas_side = side;
  cfg.alphabet = alphabet;
  return cfg;
}

StyleEncoder tiny_encoder(uint64_t seed, int side, const Alphabet& alphabet) {
  torch::manual_seed(seed);
  const auto cfg = tiny_fannet_config(side, alphabet);
  return StyleEncoder(cfg, Fannet(cfg));
}

DiffusionConfig tiny_diffusion_config(int T, int side, const Alphabet& alphabet) {
  DiffusionConfig cfg;
  cfg.T = T;
  cfg.canvas_side = side;
  cfg.base_channels = 8;
  cfg.channel_mult = {1, 2};
  cfg.mid_attention = true;
  cfg.style_dim = 8;
  cfg.alphabet = alphabet;
  return cfg;
}

DiffusionModel randomized_model(const DiffusionConfig& cfg, uint64_t seed, const std::string& encoder_hash) {
  DiffusionModel model(cfg, encoder_hash, seed);
  torch::NoGradGuard guard;
  auto gen = make_generator(derive_seed(seed, "test-randomize"));
  for (auto& p : model.net()->named_parameters(true)) {
    if (p.key().rfind("conv_out", 0) == 0) p.value().copy_(torch::randn(p.value().sizes(), gen) * 0.05);
  }
  return model;
}

StyleVector random_style(Rng& rng, int dim) {
  std::vector<float> v(static_cast<size_t>(dim));
  for (auto& x : v) x = static_cast<float>(2.0 * uniform01(rng) - 1.0);
  return StyleVector(std::move(v));
}

}  // namespace gf_test
