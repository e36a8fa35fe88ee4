#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "glyphfusion/checkpoint.hpp"
#include "glyphfusion/dataset.hpp"
#include "glyphfusion/image.hpp"
#include "glyphfusion/schedule.hpp"
#include "glyphfusion/style_encoder.hpp"
#include "glyphfusion/unet.hpp"

namespace glyphfusion {

struct DiffusionConfig {
  int T = 200;
  int canvas_side = 32;
  int base_channels = 64;
  std::vector<int> channel_mult = {1, 2, 2};
  bool mid_attention = true;
  int style_dim = 512;
  Alphabet alphabet;
  /// Default guidance scale.
  double w = 3.0;
  /// Condition dropout probability used in training.
  double p_drop = 0.1;

  UNetConfig unet() const;
  nlohmann::json to_json() const;
  static DiffusionConfig from_json(const nlohmann::json& j);
};

/// Optional condition: nullopt selects the learned null pathway.
using ClassCond = std::optional<CharClass>;
using StyleCond = std::optional<StyleVector>;

/// Trained noise predictor plus its schedule. Inference methods are const
/// and never touch the weights.
class DiffusionModel {
 public:
  /// Weights are initialised from derive_seed(init_seed, "init").
  explicit DiffusionModel(DiffusionConfig cfg, std::string encoder_hash = "", uint64_t init_seed = 0);

  static DiffusionModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  TensorStore to_store() const;
  std::string hash() const;

  const DiffusionConfig& config() const noexcept { return cfg_; }
  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const std::string& encoder_hash() const noexcept { return encoder_hash_; }
  int64_t step() const noexcept { return step_; }
  UNet& net() noexcept { return net_; }
  const UNet& net() const noexcept { return net_; }

  /// kEncoderMismatch when the encoder differs from the one used for
  /// training, unless `allow_mismatch`.
  void check_encoder(const StyleEncoder& encoder, bool allow_mismatch = false) const;

  /// eps_theta(x_t | t, c, s) for a [B,1,H,W] batch sharing one step.
  torch::Tensor predict_noise(const torch::Tensor& x_t, int t, const ClassCond& c, const StyleCond& s) const;
  /// (1 - w) * eps(x_t | t) + w * eps(x_t | t, c, s). The two passes run separately.
  torch::Tensor guided_noise(const torch::Tensor& x_t, int t, const ClassCond& c, const StyleCond& s, double w) const;

  /// Batched predictor: per-sample class ids, styles [B,d] and 0/1 masks.
  torch::Tensor predict_noise_batch(const torch::Tensor& x_t, int t, const torch::Tensor& cls,
                                    const torch::Tensor& cls_mask, const torch::Tensor& style,
                                    const torch::Tensor& style_mask) const;

  /// Full T-step ancestral sampling from x_T ~ N(0, I) drawn with `seed`.
  GlyphImage sample(const ClassCond& c, const StyleCond& s, double w, uint64_t seed) const;
  /// Batched sampling. Styles [B,d] with style_mask [B]; one generator for
  /// the whole batch, so results depend on the batch composition.
  std::vector<GlyphImage> sample_batch(const torch::Tensor& cls, const torch::Tensor& style,
                                       const torch::Tensor& style_mask, double w, uint64_t seed) const;

  void set_step(int64_t step) noexcept { step_ = step; }
  void set_training_metadata(nlohmann::json meta) { training_ = std::move(meta); }
  const nlohmann::json& training_metadata() const noexcept { return training_; }
  TensorStore& optimizer_state() noexcept { return optim_; }
  const TensorStore& optimizer_state() const noexcept { return optim_; }

 private:
  DiffusionConfig cfg_;
  NoiseSchedule sched_;
  UNet net_;
  std::string encoder_hash_;
  int64_t step_ = 0;
  nlohmann::json training_ = nlohmann::json::object();
  TensorStore optim_;
};

/// Reverse process from step `t_start` down to 1. `eps_fn(x, t)` returns the
/// noise estimate; one Gaussian draw per step t > 1 comes from `gen`.
torch::Tensor reverse_process(const torch::Tensor& x_start, int t_start, const NoiseSchedule& sched,
                              const std::function<torch::Tensor(const torch::Tensor&, int)>& eps_fn,
                              torch::Generator& gen);

struct DiffusionTrainConfig {
  int batch_size = 64;
  double lr = 1e-4;
  int64_t iters = 20000;
  uint64_t seed = 0;
  AugmentConfig augment;
  int log_every = 100;
  /// Checkpoint every n steps during training (0 = only at the end).
  int64_t save_every = 0;
};

/// One optimisation step on a prepared batch. Keeps Adam state across calls.
class DiffusionTrainer {
 public:
  DiffusionTrainer(DiffusionModel& model, const DiffusionTrainConfig& cfg);

  /// x0 ink [B,1,H,W] in [0,1], labels [B], styles [B,d]. Draws t, eps and
  /// the dropout masks from derive_seed(seed, "diffusion-step", step).
  double train_step(const torch::Tensor& x0_ink, const torch::Tensor& labels, const torch::Tensor& styles);

  /// Writes Adam moments into the model's optimizer store.
  void export_state();

 private:
  DiffusionModel& model_;
  DiffusionTrainConfig cfg_;
  torch::optim::Adam opt_;
};

struct DiffusionTrainResult {
  std::vector<double> loss;
  int64_t first_step = 0;
};

/// Trains on every glyph of `train`, conditioning on the frozen encoder's
/// style of each un-augmented glyph. Continues from model.step().
/// `on_checkpoint(model, losses so far)` runs every save_every steps and at the end.
using CheckpointHook = std::function<void(const DiffusionModel&, const std::vector<double>&)>;
DiffusionTrainResult train_diffusion(DiffusionModel& model, const Manifest& train, const StyleEncoder& encoder,
                                     const DiffusionTrainConfig& cfg, const CheckpointHook& on_checkpoint = {});

/// 20-step moving averages at the start and end of a loss curve.
std::pair<double, double> moving_average_ends(const std::vector<double>& loss, size_t window = 20);

}  // namespace glyphfusion
