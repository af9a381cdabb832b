#pragma once

#include <array>
#include <cstdint>

#include "quadkit/tensor.hpp"

namespace quadkit {

/// xoshiro256** seeded through SplitMix64. The integer stream is identical on
/// every platform; normals use Box-Muller on top of it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

  Tensor normal_tensor(Shape shape, double stddev = 1.0);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  /// Independent child stream; does not disturb this generator beyond one draw.
  Rng fork();

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace quadkit
