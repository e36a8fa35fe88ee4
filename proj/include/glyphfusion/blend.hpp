#pragma once

#include <torch/torch.h>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

struct ConvexWeights {
  float first;
  float second;
};

/// Weights (lambda, 1 - lambda), arranged so that convex_weights(1 - lambda)
/// (with 1 - lambda formed in double) is exactly the swap of
/// convex_weights(lambda). The subtraction 1 - x is exact for x in [0.5, 1],
/// so the smaller weight is always the one produced by an exact subtraction.
inline ConvexWeights convex_weights(double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kInvalidArgument, "lambda must lie in [0,1]");
  if (lambda >= 0.5) return {static_cast<float>(lambda), static_cast<float>(1.0 - lambda)};
  const double other = 1.0 - lambda;
  return {static_cast<float>(1.0 - other), static_cast<float>(other)};
}

/// lambda * a + (1 - lambda) * b, elementwise. Products are formed separately
/// and summed once, so blend(a, b, l) == blend(b, a, 1 - l) bit for bit.
inline torch::Tensor convex_blend(const torch::Tensor& a, const torch::Tensor& b, double lambda) {
  const auto w = convex_weights(lambda);
  return (a * w.first) + (b * w.second);
}

}  // namespace glyphfusion
