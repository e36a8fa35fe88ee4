#include "glyphfusion/interpolation.hpp"

#include <algorithm>

#include "glyphfusion/blend.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/random.hpp"

using json = nlohmann::json;

namespace glyphfusion {

std::string to_string(Approach a) {
  switch (a) {
    case Approach::kImageBlend: return "image";
    case Approach::kConditionBlend: return "cond";
    case Approach::kNoiseBlend: return "noise";
    case Approach::kFannetBaseline: return "fannet";
  }
  return "cond";
}

Approach parse_approach(const std::string& s) {
  if (s == "image") return Approach::kImageBlend;
  if (s == "cond") return Approach::kConditionBlend;
  if (s == "noise") return Approach::kNoiseBlend;
  if (s == "fannet") return Approach::kFannetBaseline;
  raise(ErrorKind::kInvalidArgument, "unknown approach '" + s + "' (image, cond, noise, fannet)");
}

json InterpolationRequest::to_json() const {
  json j = {{"approach", to_string(approach)}, {"letter", std::string(1, c.letter)}, {"class_index", c.index},
            {"lambda", lambda}, {"w", w}, {"seed", seed}};
  if (t_prime) j["t_prime"] = *t_prime;
  return j;
}

namespace {

void check_pair(const InterpolationRequest& req) {
  require(req.r1.side() == req.r2.side() && req.r1.side() > 0, ErrorKind::kShapeMismatch,
          "reference images differ in size");
  require(req.lambda >= 0.0 && req.lambda <= 1.0, ErrorKind::kInvalidArgument, "lambda must lie in [0,1]");
  require(req.w >= 0.0, ErrorKind::kInvalidArgument, "guidance scale must be non-negative");
}

torch::Tensor batch_of(const GlyphImage& img) { return to_model_range(img).unsqueeze(0); }

}  // namespace

GlyphImage or_blend(const GlyphImage& r1, const GlyphImage& r2) {
  require(r1.side() == r2.side(), ErrorKind::kShapeMismatch, "OR blend needs equal image sizes");
  std::vector<float> out(r1.pixels().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(r1.pixels()[i], r2.pixels()[i]);
  return GlyphImage(r1.side(), r1.side(), std::move(out));
}

GlyphImage sdedit_interpolate(const InterpolationRequest& req, const DiffusionModel& model) {
  check_pair(req);
  const auto& sched = model.schedule();
  const int t_prime = req.t_prime.value_or(sched.T / 2);
  require(t_prime >= 0 && t_prime <= sched.T, ErrorKind::kStepOutOfRange,
          "t' = " + std::to_string(t_prime) + " outside [0, " + std::to_string(sched.T) + "]");
  require(req.r1.side() == model.config().canvas_side, ErrorKind::kShapeMismatch,
          "reference size differs from the model canvas");
  const GlyphImage blended = or_blend(req.r1, req.r2);
  if (t_prime == 0) return blended;
  auto gen = make_generator(req.seed);
  auto r_bar = batch_of(blended);
  auto z = torch::randn(r_bar.sizes(), gen);
  auto x = forward_noise(r_bar, t_prime, z, sched);
  const ClassCond c = req.c;
  x = reverse_process(x, t_prime, sched,
                      [&](const torch::Tensor& xt, int t) { return model.guided_noise(xt, t, c, std::nullopt, req.w); },
                      gen);
  return from_model_range(x[0]);
}

GlyphImage condition_interpolate(const InterpolationRequest& req, const StyleEncoder& encoder,
                                 const DiffusionModel& model) {
  check_pair(req);
  const auto s = blend(encoder.encode(req.r1), encoder.encode(req.r2), req.lambda);
  return model.sample(req.c, s, req.w, req.seed);
}

GlyphImage noise_interpolate(const InterpolationRequest& req, const StyleEncoder& encoder,
                             const DiffusionModel& model) {
  check_pair(req);
  const StyleCond s1 = encoder.encode(req.r1);
  const StyleCond s2 = encoder.encode(req.r2);
  const ClassCond c = req.c;
  const auto& sched = model.schedule();
  const int side = model.config().canvas_side;
  auto gen = make_generator(req.seed);
  auto x = torch::randn({1, 1, side, side}, gen);
  x = reverse_process(x, sched.T, sched,
                      [&](const torch::Tensor& xt, int t) {
                        auto e1 = model.guided_noise(xt, t, c, s1, req.w);
                        auto e2 = model.guided_noise(xt, t, c, s2, req.w);
                        return convex_blend(e1, e2, req.lambda);
                      },
                      gen);
  return from_model_range(x[0]);
}

GlyphImage interpolate(const InterpolationRequest& req, const StyleEncoder& encoder, const DiffusionModel* model) {
  if (req.approach == Approach::kFannetBaseline) return fannet_interpolate(req.r1, req.r2, req.lambda, req.c, encoder);
  require(model != nullptr, ErrorKind::kMissingPrerequisite, to_string(req.approach) + " blending needs a diffusion checkpoint");
  switch (req.approach) {
    case Approach::kImageBlend: return sdedit_interpolate(req, *model);
    case Approach::kConditionBlend: return condition_interpolate(req, encoder, *model);
    case Approach::kNoiseBlend: return noise_interpolate(req, encoder, *model);
    case Approach::kFannetBaseline: break;
  }
  return fannet_interpolate(req.r1, req.r2, req.lambda, req.c, encoder);
}

std::vector<double> sweep_lambdas(int n_steps) {
  require(n_steps >= 2, ErrorKind::kInvalidArgument, "a sweep needs at least 2 steps");
  std::vector<double> out;
  for (int i = 0; i < n_steps; ++i) out.push_back(static_cast<double>(i) / (n_steps - 1));
  return out;
}

std::vector<GlyphImage> lambda_sweep(const InterpolationRequest& req, int n_steps, const StyleEncoder& encoder,
                                     const DiffusionModel* model) {
  std::vector<GlyphImage> out;
  for (double l : sweep_lambdas(n_steps)) {
    auto r = req;
    r.lambda = l;
    out.push_back(interpolate(r, encoder, model));
  }
  return out;
}

}  // namespace glyphfusion
