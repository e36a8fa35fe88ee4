#pragma once

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace glyphfusion {

struct UNetConfig {
  int canvas_side = 32;
  int base_channels = 64;
  std::vector<int> channel_mult = {1, 2, 2};
  int num_classes = 26;
  int style_dim = 512;
  int groups = 8;
  bool mid_attention = true;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in_ch, int out_ch, int emb_dim, int groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear emb_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int channels, int groups);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d qkv_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Attention);

/// Sinusoidal features of integer steps, [B] -> [B,dim].
torch::Tensor timestep_features(const torch::Tensor& t, int dim);

/// Noise predictor eps(x_t | t, c, s). The class one-hot and the style vector
/// are projected and added to the step embedding. A per-sample mask of 0
/// swaps in the learned null class embedding and null style token.
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const UNetConfig& cfg);

  /// x [B,1,H,W], t [B] int64, cls [B] int64, cls_mask [B], style [B,d],
  /// style_mask [B]. Masks are 1 for "use condition", 0 for null.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& cls,
                        const torch::Tensor& cls_mask, const torch::Tensor& style, const torch::Tensor& style_mask);

  const UNetConfig& config() const noexcept { return cfg_; }
  const torch::Tensor& null_style() const noexcept { return null_style_; }
  const torch::Tensor& null_class() const noexcept { return null_class_; }

 private:
  UNetConfig cfg_;
  int emb_dim_ = 0;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Linear class_proj_{nullptr}, style_proj_{nullptr};
  torch::Tensor null_style_, null_class_;
  torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
  torch::nn::ModuleList down_blocks_{nullptr}, downsamples_{nullptr}, up_blocks_{nullptr}, upsamples_{nullptr};
  ResBlock mid1_{nullptr}, mid2_{nullptr};
  Attention mid_attn_{nullptr};
};
TORCH_MODULE(UNet);

}  // namespace glyphfusion
