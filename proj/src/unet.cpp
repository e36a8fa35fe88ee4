#include "glyphfusion/unet.hpp"

#include <cmath>
#include <numeric>

#include "glyphfusion/error.hpp"

namespace nn = torch::nn;
using json = nlohmann::json;

namespace glyphfusion {

namespace {

int group_count(int channels, int groups) { return std::gcd(channels, groups); }

}  // namespace

json UNetConfig::to_json() const {
  return {{"canvas_side", canvas_side}, {"base_channels", base_channels}, {"channel_mult", channel_mult},
          {"num_classes", num_classes}, {"style_dim", style_dim},         {"groups", groups},
          {"mid_attention", mid_attention}};
}

UNetConfig UNetConfig::from_json(const json& j) {
  UNetConfig c;
  c.canvas_side = j.at("canvas_side").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_mult = j.at("channel_mult").get<std::vector<int>>();
  c.num_classes = j.at("num_classes").get<int>();
  c.style_dim = j.at("style_dim").get<int>();
  c.groups = j.at("groups").get<int>();
  c.mid_attention = j.at("mid_attention").get<bool>();
  return c;
}

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int emb_dim, int groups) {
  norm1_ = register_module("norm1", nn::GroupNorm(group_count(in_ch, groups), in_ch));
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  emb_proj_ = register_module("emb_proj", nn::Linear(emb_dim, out_ch));
  norm2_ = register_module("norm2", nn::GroupNorm(group_count(out_ch, groups), out_ch));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  if (in_ch != out_ch) skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  auto h = conv1_(torch::silu(norm1_(x)));
  h = h + emb_proj_(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2_(torch::silu(norm2_(h)));
  return h + (skip_ ? skip_(x) : x);
}

AttentionImpl::AttentionImpl(int channels, int groups) {
  norm_ = register_module("norm", nn::GroupNorm(group_count(channels, groups), channels));
  qkv_ = register_module("qkv", nn::Conv2d(nn::Conv2dOptions(channels, 3 * channels, 1)));
  out_ = register_module("out", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto qkv = qkv_(norm_(x)).reshape({b, 3, c, h * w});
  auto q = qkv.select(1, 0), k = qkv.select(1, 1), v = qkv.select(1, 2);
  auto attn = torch::softmax(torch::bmm(q.transpose(1, 2), k) / std::sqrt(static_cast<double>(c)), -1);
  auto out = torch::bmm(v, attn.transpose(1, 2)).reshape({b, c, h, w});
  return x + out_(out);
}

torch::Tensor timestep_features(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kFloat32) * (-std::log(10000.0) / std::max(half - 1, 1)));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto feats = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2 == 1) feats = torch::cat({feats, torch::zeros({t.size(0), 1})}, 1);
  return feats;
}

UNetImpl::UNetImpl(const UNetConfig& cfg) : cfg_(cfg) {
  const int levels = static_cast<int>(cfg.channel_mult.size());
  require(levels >= 1, ErrorKind::kInvalidArgument, "U-Net needs at least one level");
  require(cfg.canvas_side % (1 << (levels - 1)) == 0, ErrorKind::kInvalidArgument,
          "canvas side not divisible by the U-Net downsampling factor");
  const int c = cfg.base_channels;
  emb_dim_ = 4 * c;
  time_mlp_ = register_module("time_mlp", nn::Sequential(nn::Linear(c, emb_dim_), nn::SiLU(), nn::Linear(emb_dim_, emb_dim_)));
  class_proj_ = register_module("class_proj", nn::Linear(cfg.num_classes, emb_dim_));
  style_proj_ = register_module("style_proj", nn::Linear(cfg.style_dim, emb_dim_));
  null_style_ = register_parameter("null_style", torch::randn({cfg.style_dim}) * 0.02);
  null_class_ = register_parameter("null_class", torch::randn({emb_dim_}) * 0.02);

  conv_in_ = register_module("conv_in", nn::Conv2d(nn::Conv2dOptions(1, c, 3).padding(1)));
  down_blocks_ = register_module("down_blocks", nn::ModuleList());
  downsamples_ = register_module("downsamples", nn::ModuleList());
  up_blocks_ = register_module("up_blocks", nn::ModuleList());
  upsamples_ = register_module("upsamples", nn::ModuleList());

  std::vector<int> skip_ch;
  int ch = c;
  for (int i = 0; i < levels; ++i) {
    const int out = c * cfg.channel_mult[static_cast<size_t>(i)];
    down_blocks_->push_back(ResBlock(ch, out, emb_dim_, cfg.groups));
    ch = out;
    skip_ch.push_back(ch);
    if (i + 1 < levels) downsamples_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
  }
  mid1_ = register_module("mid1", ResBlock(ch, ch, emb_dim_, cfg.groups));
  if (cfg.mid_attention) mid_attn_ = register_module("mid_attn", Attention(ch, cfg.groups));
  mid2_ = register_module("mid2", ResBlock(ch, ch, emb_dim_, cfg.groups));
  for (int i = levels - 1; i >= 0; --i) {
    const int out = c * cfg.channel_mult[static_cast<size_t>(i)];
    up_blocks_->push_back(ResBlock(ch + skip_ch[static_cast<size_t>(i)], out, emb_dim_, cfg.groups));
    ch = out;
    if (i > 0) upsamples_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
  }
  norm_out_ = register_module("norm_out", nn::GroupNorm(group_count(ch, cfg.groups), ch));
  conv_out_ = register_module("conv_out", nn::Conv2d(nn::Conv2dOptions(ch, 1, 3).padding(1)));
  torch::NoGradGuard no_grad;
  conv_out_->weight.zero_();
  conv_out_->bias.zero_();
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& cls,
                                const torch::Tensor& cls_mask, const torch::Tensor& style,
                                const torch::Tensor& style_mask) {
  const int64_t b = x.size(0);
  require(x.dim() == 4 && x.size(1) == 1 && x.size(2) == cfg_.canvas_side && x.size(3) == cfg_.canvas_side,
          ErrorKind::kShapeMismatch, "x_t must be [B,1," + std::to_string(cfg_.canvas_side) + "," +
                                         std::to_string(cfg_.canvas_side) + "]");
  require(t.numel() == b && cls.numel() == b && cls_mask.numel() == b && style_mask.numel() == b,
          ErrorKind::kShapeMismatch, "conditions must have one entry per sample");
  require(style.dim() == 2 && style.size(0) == b && style.size(1) == cfg_.style_dim, ErrorKind::kDimensionMismatch,
          "style must be [B," + std::to_string(cfg_.style_dim) + "]");

  auto cm = cls_mask.to(torch::kFloat32).view({b, 1});
  auto sm = style_mask.to(torch::kFloat32).view({b, 1});
  auto one_hot = torch::one_hot(cls.to(torch::kInt64).clamp(0, cfg_.num_classes - 1), cfg_.num_classes).to(torch::kFloat32);
  auto class_emb = class_proj_(one_hot) * cm + null_class_.unsqueeze(0) * (1.0 - cm);
  auto style_in = style * sm + null_style_.unsqueeze(0) * (1.0 - sm);
  auto emb = time_mlp_->forward(timestep_features(t, cfg_.base_channels)) + class_emb + style_proj_(style_in);

  auto h = conv_in_(x);
  std::vector<torch::Tensor> skips;
  const size_t levels = cfg_.channel_mult.size();
  for (size_t i = 0; i < levels; ++i) {
    h = down_blocks_->at<ResBlockImpl>(i).forward(h, emb);
    skips.push_back(h);
    if (i + 1 < levels) h = downsamples_->at<nn::Conv2dImpl>(i).forward(h);
  }
  h = mid1_(h, emb);
  if (mid_attn_) h = mid_attn_(h);
  h = mid2_(h, emb);
  for (size_t j = 0; j < levels; ++j) {
    const size_t i = levels - 1 - j;
    h = up_blocks_->at<ResBlockImpl>(j).forward(torch::cat({h, skips[i]}, 1), emb);
    if (i > 0) {
      h = torch::upsample_nearest2d(h, {h.size(2) * 2, h.size(3) * 2});
      h = upsamples_->at<nn::Conv2dImpl>(j).forward(h);
    }
  }
  return conv_out_(torch::silu(norm_out_(h)));
}

}  // namespace glyphfusion
