#pragma once

#include <cstdint>
#include <random>

#include "geodiff/grid.hpp"

namespace geodiff {

/// Derives an independent stream seed from a base seed and a stream id.
///
/// Every seeded component splits its randomness this way: the base seed is
/// mixed with a fixed per-purpose stream id through splitmix64, so adding a
/// consumer never perturbs the draws seen by another.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

/// Portable generator: mt19937_64 plus hand-rolled uniform and Box-Muller
/// normal draws, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(split_seed(seed, 0)) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

FieldStack gaussian_noise(int channels, int height, int width, Rng& rng);

}  // namespace geodiff
