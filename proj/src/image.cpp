#include "glyphfusion/image.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

GlyphImage::GlyphImage(int side) : side_(side), pixels_(static_cast<size_t>(side) * side, 0.0f) {
  require(side > 0, ErrorKind::kInvalidArgument, "canvas side must be positive");
}

GlyphImage::GlyphImage(int height, int width, std::vector<float> pixels)
    : side_(height), pixels_(std::move(pixels)) {
  require(height > 0 && height == width, ErrorKind::kShapeMismatch,
          "glyph canvas must be square, got " + std::to_string(height) + "x" + std::to_string(width));
  require(pixels_.size() == static_cast<size_t>(height) * width, ErrorKind::kShapeMismatch,
          "pixel count does not match canvas");
  for (float v : pixels_) {
    require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorKind::kInvalidArgument,
            "pixel value outside [0,1]");
  }
}

void GlyphImage::set(int y, int x, float v) {
  require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorKind::kInvalidArgument,
          "pixel value outside [0,1]");
  pixels_[static_cast<size_t>(y) * side_ + x] = v;
}

double GlyphImage::ink_fraction(float threshold) const {
  if (pixels_.empty()) return 0.0;
  auto n = std::count_if(pixels_.begin(), pixels_.end(), [&](float v) { return v >= threshold; });
  return static_cast<double>(n) / static_cast<double>(pixels_.size());
}

double GlyphImage::ink_mass() const {
  double s = 0.0;
  for (float v : pixels_) s += v;
  return s;
}

torch::Tensor to_tensor(const GlyphImage& img) {
  require(!img.empty(), ErrorKind::kInvalidArgument, "empty image");
  auto px = img.pixels();
  return torch::from_blob(const_cast<float*>(px.data()), {1, img.side(), img.side()}, torch::kFloat32)
      .clone();
}

GlyphImage from_tensor(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (x.dim() == 3) {
    require(x.size(0) == 1, ErrorKind::kShapeMismatch, "expected single channel tensor");
    x = x.squeeze(0);
  }
  require(x.dim() == 2, ErrorKind::kShapeMismatch, "expected [H,W] or [1,H,W] tensor");
  x = x.clamp(0.0, 1.0).contiguous();
  const float* p = x.data_ptr<float>();
  std::vector<float> v(p, p + x.numel());
  for (auto& f : v) {
    if (!std::isfinite(f)) f = 0.0f;
  }
  return GlyphImage(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), std::move(v));
}

torch::Tensor to_model_range(const GlyphImage& img) { return to_tensor(img) * 2.0f - 1.0f; }

GlyphImage from_model_range(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kFloat32).clamp(-1.0, 1.0);
  return from_tensor((x + 1.0f) / 2.0f);
}

double mse(const GlyphImage& a, const GlyphImage& b) {
  require(a.side() == b.side() && !a.empty(), ErrorKind::kShapeMismatch, "mse needs equal canvases");
  double s = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (size_t i = 0; i < pa.size(); ++i) {
    double d = static_cast<double>(pa[i]) - pb[i];
    s += d * d;
  }
  return s / static_cast<double>(pa.size());
}

Alphabet::Alphabet() : letters_("ABCDEFGHIJKLMNOPQRSTUVWXYZ") {}

Alphabet::Alphabet(std::string letters) : letters_(std::move(letters)) {
  require(!letters_.empty(), ErrorKind::kInvalidArgument, "alphabet is empty");
  std::set<char> seen(letters_.begin(), letters_.end());
  require(seen.size() == letters_.size(), ErrorKind::kInvalidArgument, "alphabet has duplicate letters");
}

char Alphabet::letter(int index) const {
  require(index >= 0 && index < size(), ErrorKind::kInvalidArgument,
          "class index " + std::to_string(index) + " outside alphabet");
  return letters_[static_cast<size_t>(index)];
}

int Alphabet::index_of(char letter) const {
  auto pos = letters_.find(letter);
  require(pos != std::string::npos, ErrorKind::kInvalidArgument,
          std::string("letter '") + letter + "' not in alphabet");
  return static_cast<int>(pos);
}

bool Alphabet::contains(char letter) const { return letters_.find(letter) != std::string::npos; }

torch::Tensor Alphabet::one_hot(const CharClass& c) const {
  require(c.index >= 0 && c.index < size(), ErrorKind::kInvalidArgument, "class outside alphabet");
  auto v = torch::zeros({size()});
  v[c.index] = 1.0f;
  return v;
}

}  // namespace glyphfusion
