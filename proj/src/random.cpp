#include "glyphfusion/random.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "glyphfusion/error.hpp"

namespace glyphfusion {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, std::string_view stream, uint64_t index) {
  // FNV-1a over the stream name, mixed with the seed and index.
  uint64_t h = 0xCBF29CE484222325ull;
  for (char c : stream) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

uint64_t uniform_below(Rng& rng, uint64_t n) {
  require(n > 0, ErrorKind::kInvalidArgument, "uniform_below(0)");
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  require(lo <= hi, ErrorKind::kInvalidArgument, "uniform_int with empty range");
  return lo + static_cast<int64_t>(uniform_below(rng, static_cast<uint64_t>(hi - lo) + 1));
}

torch::Generator make_generator(uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

}  // namespace glyphfusion
