#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace glyphfusion {

/// Square raster of ink intensity. 1.0 is full ink, 0.0 is background.
class GlyphImage {
 public:
  GlyphImage() = default;
  /// Blank (all background) canvas.
  explicit GlyphImage(int side);
  /// Throws kShapeMismatch unless height == width == sqrt(size) and
  /// kInvalidArgument for values outside [0,1] or non-finite.
  GlyphImage(int height, int width, std::vector<float> pixels);

  int side() const noexcept { return side_; }
  int height() const noexcept { return side_; }
  int width() const noexcept { return side_; }
  bool empty() const noexcept { return side_ == 0; }

  float at(int y, int x) const { return pixels_[static_cast<size_t>(y) * side_ + x]; }
  void set(int y, int x, float v);
  std::span<const float> pixels() const noexcept { return pixels_; }

  /// Fraction of pixels whose ink is at least `threshold`.
  double ink_fraction(float threshold = 0.5f) const;
  /// Sum of ink intensities.
  double ink_mass() const;

  bool operator==(const GlyphImage&) const = default;

 private:
  int side_ = 0;
  std::vector<float> pixels_;
};

/// [1,H,W] float tensor in [0,1].
torch::Tensor to_tensor(const GlyphImage& img);
/// Accepts [H,W] or [1,H,W]; values are clamped to [0,1].
GlyphImage from_tensor(const torch::Tensor& t);

/// v -> 2v - 1, returned as [1,H,W].
torch::Tensor to_model_range(const GlyphImage& img);
/// Clamp to [-1,1], then x -> (x + 1) / 2.
GlyphImage from_model_range(const torch::Tensor& t);

/// Mean squared pixel difference; kShapeMismatch on differing sides.
double mse(const GlyphImage& a, const GlyphImage& b);

struct CharClass {
  int index = 0;
  char letter = 'A';
  bool operator==(const CharClass&) const = default;
};

/// Ordered character list; index <-> letter is a bijection.
class Alphabet {
 public:
  /// `A`..`Z`.
  Alphabet();
  explicit Alphabet(std::string letters);

  int size() const noexcept { return static_cast<int>(letters_.size()); }
  const std::string& letters() const noexcept { return letters_; }
  char letter(int index) const;
  int index_of(char letter) const;
  bool contains(char letter) const;
  CharClass char_class(char letter) const { return {index_of(letter), letter}; }
  CharClass char_class(int index) const { return {index, letter(index)}; }
  /// [size] float tensor with a single 1.
  torch::Tensor one_hot(const CharClass& c) const;

  bool operator==(const Alphabet&) const = default;

 private:
  std::string letters_;
};

}  // namespace glyphfusion
