#pragma once

#include "agentsod/tensor.hpp"

#include <cmath>
#include <cstdint>

namespace agentsod {

/// SplitMix64. Platform-independent: the stream depends only on the seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 24 bits of mantissa, exactly representable in float.
  float uniform01() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  /// Uniform in [-bound, bound].
  float symmetric(float bound) { return bound * (2.0f * uniform01() - 1.0f); }

 private:
  std::uint64_t state_;
};

inline void fill_symmetric(Tensor& t, SplitMix64& rng, float bound) {
  for (float& v : t.data()) v = rng.symmetric(bound);
}

inline float xavier_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
}

inline Tensor random_tensor(Shape shape, SplitMix64& rng, float bound = 1.0f) {
  Tensor t(std::move(shape));
  fill_symmetric(t, rng, bound);
  return t;
}

}  // namespace agentsod
