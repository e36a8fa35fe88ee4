#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/image.hpp"
#include "glyphfusion/style_encoder.hpp"

namespace glyphfusion {

enum class Approach { kImageBlend, kConditionBlend, kNoiseBlend, kFannetBaseline };

/// "image", "cond", "noise", "fannet".
std::string to_string(Approach a);
Approach parse_approach(const std::string& s);

struct InterpolationRequest {
  Approach approach = Approach::kConditionBlend;
  GlyphImage r1;
  GlyphImage r2;
  CharClass c;
  double lambda = 0.5;
  double w = 3.0;
  uint64_t seed = 0;
  /// Image-blend restart step; defaults to T/2.
  std::optional<int> t_prime;

  nlohmann::json to_json() const;
};

/// Pixelwise max of ink, i.e. OR on the ink masks.
GlyphImage or_blend(const GlyphImage& r1, const GlyphImage& r2);

/// Noises or_blend(r1, r2) to step t' with the forward marginal, then denoises
/// with class c and the null style. t' == 0 returns the blend unchanged.
GlyphImage sdedit_interpolate(const InterpolationRequest& req, const DiffusionModel& model);

/// Samples with s = lambda * E(r1) + (1 - lambda) * E(r2).
GlyphImage condition_interpolate(const InterpolationRequest& req, const StyleEncoder& encoder,
                                 const DiffusionModel& model);

/// Blends the guided noise estimates of s1 and s2 at every step; one shared
/// Gaussian draw per step.
GlyphImage noise_interpolate(const InterpolationRequest& req, const StyleEncoder& encoder,
                             const DiffusionModel& model);

/// Dispatch on req.approach. `model` may be null for the FANnet baseline.
GlyphImage interpolate(const InterpolationRequest& req, const StyleEncoder& encoder, const DiffusionModel* model);

/// lambda_i = i / (n - 1), i = 0..n-1, every image with req.seed.
std::vector<double> sweep_lambdas(int n_steps);
std::vector<GlyphImage> lambda_sweep(const InterpolationRequest& req, int n_steps, const StyleEncoder& encoder,
                                     const DiffusionModel* model);

}  // namespace glyphfusion
