#include "glyphfusion/schedule.hpp"

#include <cmath>
#include <numbers>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

namespace {

void check_step(int t, const NoiseSchedule& sched) {
  require(t >= 1 && t <= sched.T, ErrorKind::kStepOutOfRange,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(sched.T) + "]");
}

}  // namespace

double cosine_ramp(double t, int T, double s) {
  const double c = std::cos(((t / T + s) / (1.0 + s)) * std::numbers::pi / 2.0);
  return c * c;
}

NoiseSchedule cosine_schedule(int T, double s_offset) {
  require(T >= 2, ErrorKind::kInvalidArgument, "schedule needs T >= 2, got " + std::to_string(T));
  require(s_offset > 0.0, ErrorKind::kInvalidArgument, "schedule offset must be positive");
  NoiseSchedule sched;
  sched.T = T;
  sched.offset = s_offset;
  sched.beta.assign(static_cast<size_t>(T) + 1, 0.0);
  sched.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
  sched.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double ratio = cosine_ramp(t, T, s_offset) / cosine_ramp(t - 1, T, s_offset);
    const double beta = std::min(1.0 - ratio, kMaxBeta);
    const auto i = static_cast<size_t>(t);
    sched.beta[i] = beta;
    sched.alpha[i] = 1.0 - beta;
    sched.alpha_bar[i] = sched.alpha_bar[i - 1] * sched.alpha[i];
  }
  return sched;
}

torch::Tensor forward_noise(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& sched) {
  check_step(t, sched);
  require(x0.sizes() == eps.sizes(), ErrorKind::kShapeMismatch, "x0 and eps differ in shape");
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  return x0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

torch::Tensor forward_noise(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                            const NoiseSchedule& sched) {
  require(x0.sizes() == eps.sizes(), ErrorKind::kShapeMismatch, "x0 and eps differ in shape");
  require(t.dim() == 1 && t.size(0) == x0.size(0), ErrorKind::kShapeMismatch, "need one step per sample");
  auto tc = t.to(torch::kInt64).contiguous();
  const int64_t* p = tc.data_ptr<int64_t>();
  std::vector<float> a(static_cast<size_t>(tc.numel())), b(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    check_step(static_cast<int>(p[i]), sched);
    const double ab = sched.alpha_bar[static_cast<size_t>(p[i])];
    a[i] = static_cast<float>(std::sqrt(ab));
    b[i] = static_cast<float>(std::sqrt(1.0 - ab));
  }
  std::vector<int64_t> shape(static_cast<size_t>(x0.dim()), 1);
  shape[0] = x0.size(0);
  auto ta = torch::tensor(a).view(shape);
  auto tb = torch::tensor(b).view(shape);
  return x0 * ta + eps * tb;
}

torch::Tensor predict_x0(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched) {
  check_step(t, sched);
  require(x_t.sizes() == eps_hat.sizes(), ErrorKind::kShapeMismatch, "x_t and eps_hat differ in shape");
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  return (x_t - eps_hat * std::sqrt(1.0 - ab)) / std::sqrt(ab);
}

torch::Tensor denoise_mean(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched) {
  check_step(t, sched);
  require(x_t.sizes() == eps_hat.sizes(), ErrorKind::kShapeMismatch, "x_t and eps_hat differ in shape");
  const auto i = static_cast<size_t>(t);
  const double ab = sched.alpha_bar[i], ab_prev = sched.alpha_bar[i - 1];
  const double c0 = std::sqrt(ab_prev) * sched.beta[i] / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha[i]) * (1.0 - ab_prev) / (1.0 - ab);
  return predict_x0(x_t, t, eps_hat, sched).clamp(-1.0, 1.0) * c0 + x_t * ct;
}

torch::Tensor denoise_step_with(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat,
                                const NoiseSchedule& sched, const torch::Tensor& z) {
  auto mu = denoise_mean(x_t, t, eps_hat, sched);
  if (t == 1) return mu;
  require(z.sizes() == x_t.sizes(), ErrorKind::kShapeMismatch, "noise draw differs in shape");
  return mu + z * std::sqrt(sched.beta[static_cast<size_t>(t)]);
}

torch::Tensor denoise_step(const torch::Tensor& x_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& sched,
                           torch::Generator& gen) {
  if (t == 1) return denoise_step_with(x_t, t, eps_hat, sched, torch::Tensor());
  check_step(t, sched);
  auto z = torch::randn(x_t.sizes(), gen, x_t.options());
  return denoise_step_with(x_t, t, eps_hat, sched, z);
}

}  // namespace glyphfusion
