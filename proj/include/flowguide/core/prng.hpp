#pragma once

#include <array>
#include <cstdint>

#include "flowguide/core/tensor.hpp"

namespace flowguide {

/// xoshiro256** generator seeded through splitmix64. The stream depends only
/// on the 64-bit seed, so runs are reproducible across platforms.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via the polar-free Box-Muller transform; draws come in
  /// pairs and the second value of each pair is cached.
  double normal();

  /// Independent child generator for worker or stage `stream`. The child seed
  /// is splitmix64(seed ^ splitmix64(stream + 1)), so it depends only on the
  /// master seed and the stream id, never on how much this generator was used.
  Prng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_cached_ = false;
  double cached_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Tensor of i.i.d. standard normal entries drawn in row-major order.
template <typename Scalar>
Tensor<Scalar> gaussian_noise(const Dims& dims, Prng& rng) {
  Tensor<Scalar> out(dims);
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(rng.normal());
  return out;
}

}  // namespace flowguide
