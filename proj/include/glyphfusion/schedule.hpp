#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace glyphfusion {

/// Per-step diffusion constants, 1-based: index t in [1, T]. Index 0 holds
/// alpha_bar = 1 (the clean image) and beta = 0.
struct NoiseSchedule {
  int T = 0;
  std::string kind = "cosine";
  double offset = 0.008;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

constexpr double kMaxBeta = 0.999;

/// Squared-cosine ramp f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2).
double cosine_ramp(double t, int T, double s);

/// beta_t = min(1 - f(t)/f(t-1), 0.999); alpha_bar is the running product of
/// alpha = 1 - beta. Throws kInvalidArgument for T < 2.
NoiseSchedule cosine_schedule(int T, double s_offset = 0.008);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. kStepOutOfRange unless 1 <= t <= T.
torch::Tensor forward_noise(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& sched);

/// Batched form with one step per sample ([B] int64 steps).
torch::Tensor forward_noise(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                            const NoiseSchedule& sched);

/// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
torch::Tensor predict_x0(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched);

/// Posterior mean of q(x_{t-1} | x_t, x0_hat) with x0_hat clamped to [-1, 1].
/// Without clamping this is (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t).
torch::Tensor denoise_mean(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched);

/// Ancestral step with sigma_t^2 = beta_t. `z` is drawn from `gen` only for
/// t > 1; at t == 1 the mean is returned.
torch::Tensor denoise_step(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched,
                           torch::Generator& gen);

/// Same step with an externally supplied draw (ignored at t == 1).
torch::Tensor denoise_step_with(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat,
                                const NoiseSchedule& sched, const torch::Tensor& z);

}  // namespace glyphfusion
