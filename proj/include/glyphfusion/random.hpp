#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <torch/torch.h>

namespace glyphfusion {

/// Engine used for every host-side random stream. mt19937_64 output is fixed by
/// the standard; the helpers below avoid the implementation-defined
/// distributions of <random> so streams are portable.
using Rng = std::mt19937_64;

uint64_t splitmix64(uint64_t x);

/// Named sub-stream of a global seed, e.g. derive_seed(seed, "sampling").
uint64_t derive_seed(uint64_t seed, std::string_view stream, uint64_t index = 0);

/// Uniform double in [0, 1).
double uniform01(Rng& rng);
/// Uniform integer in [0, n).
uint64_t uniform_below(Rng& rng, uint64_t n);
/// Uniform integer in [lo, hi].
int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi);

/// CPU torch generator seeded deterministically.
torch::Generator make_generator(uint64_t seed);

}  // namespace glyphfusion
