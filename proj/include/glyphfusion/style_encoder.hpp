#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "glyphfusion/checkpoint.hpp"
#include "glyphfusion/dataset.hpp"
#include "glyphfusion/image.hpp"

namespace glyphfusion {

/// Font style embedding produced by the FANnet encoder.
class StyleVector {
 public:
  StyleVector() = default;
  explicit StyleVector(std::vector<float> values);
  /// Accepts a [d] or [1,d] tensor.
  static StyleVector from_tensor(const torch::Tensor& t);

  int dim() const noexcept { return static_cast<int>(values_.size()); }
  const std::vector<float>& values() const noexcept { return values_; }
  /// [d] float tensor.
  torch::Tensor tensor() const;

  StyleVector operator+(const StyleVector& other) const;
  StyleVector operator*(float k) const;
  bool operator==(const StyleVector&) const = default;

 private:
  std::vector<float> values_;
};

/// lambda * a + (1 - lambda) * b with exact swap symmetry.
StyleVector blend(const StyleVector& a, const StyleVector& b, double lambda);
double cosine_similarity(const StyleVector& a, const StyleVector& b);

struct FannetConfig {
  int style_dim = 512;
  int base_channels = 16;
  int canvas_side = 32;
  Alphabet alphabet;

  nlohmann::json to_json() const;
  static FannetConfig from_json(const nlohmann::json& j);
};

/// Convolutional encoder to a style_dim bottleneck, and a class-conditional
/// decoder over concat(style, one-hot class). Batch norm after every conv.
class FannetImpl : public torch::nn::Module {
 public:
  explicit FannetImpl(const FannetConfig& cfg);

  /// [B,1,H,W] ink in [0,1] -> [B,d].
  torch::Tensor encode(const torch::Tensor& x);
  /// ([B,d], [B,K] one-hot) -> [B,1,H,W] in (0,1).
  torch::Tensor decode(const torch::Tensor& style, const torch::Tensor& one_hot);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& one_hot) { return decode(encode(x), one_hot); }

  /// Human-readable layer summary stored with checkpoints.
  nlohmann::json layout() const;

 private:
  FannetConfig cfg_;
  int bottom_ = 0;
  torch::nn::Sequential enc_convs_{nullptr};
  torch::nn::Linear enc_fc_{nullptr};
  torch::nn::Linear dec_fc_{nullptr};
  torch::nn::BatchNorm1d dec_bn_{nullptr};
  torch::nn::Sequential dec_convs_{nullptr};
};
TORCH_MODULE(Fannet);

/// Frozen FANnet checkpoint used for inference. Read-only after construction.
class StyleEncoder {
 public:
  StyleEncoder(FannetConfig cfg, Fannet model, nlohmann::json training = nlohmann::json::object());

  static StyleEncoder load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  TensorStore to_store() const;
  /// Content hash of weights and settings.
  std::string hash() const;

  const FannetConfig& config() const noexcept { return cfg_; }
  int style_dim() const noexcept { return cfg_.style_dim; }
  const nlohmann::json& training_metadata() const noexcept { return training_; }

  /// kShapeMismatch when the image side differs from the checkpoint canvas.
  StyleVector encode(const GlyphImage& img) const;
  /// [B,1,H,W] ink -> [B,d].
  torch::Tensor encode_batch(const torch::Tensor& ink) const;
  /// kDimensionMismatch when dim(s) != d.
  GlyphImage decode(const StyleVector& s, const CharClass& c) const;
  /// ([B,d], [B] class ids) -> [B,1,H,W] ink.
  torch::Tensor decode_batch(const torch::Tensor& styles, const torch::Tensor& class_ids) const;

 private:
  FannetConfig cfg_;
  Fannet model_;
  nlohmann::json training_;
};

struct FannetTrainConfig {
  FannetConfig model;
  int batch_size = 64;
  double lr = 1e-3;
  int max_steps = 2000;
  int eval_every = 100;
  /// Evaluations without validation improvement before stopping.
  int patience = 5;
  int val_pairs = 512;
  uint64_t seed = 0;
};

struct FannetTrainResult {
  StyleEncoder encoder;
  /// Per-step training loss (mean absolute pixel error).
  std::vector<double> train_loss;
  std::vector<std::pair<int, double>> val_loss;
  int best_step = 0;
  int steps_run = 0;
};

/// Trains on (glyph of class c1, class c2) -> glyph of class c2 from the same
/// font, c1 and c2 uniform over the alphabet (c1 == c2 included). Keeps the
/// weights with the lowest validation loss. kDivergence on non-finite loss.
FannetTrainResult train_fannet(const Manifest& train, const Manifest& val, const FannetTrainConfig& cfg);

/// decode(lambda * encode(r1) + (1 - lambda) * encode(r2), c).
GlyphImage fannet_interpolate(const GlyphImage& r1, const GlyphImage& r2, double lambda, const CharClass& c,
                              const StyleEncoder& encoder);

}  // namespace glyphfusion
