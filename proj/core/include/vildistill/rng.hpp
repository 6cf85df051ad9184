#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vildistill {

/// Deterministic random source. All sampling is hand-rolled on top of
/// std::mt19937_64 so that sequences are bit-identical across standard
/// library implementations (std::normal_distribution and friends are
/// implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (no cached spare, one value per call).
  double gaussian();

  /// Exponential with rate lambda via inverse CDF.
  double exponential(double lambda);

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 gen_;
};

/// Derives a stream-specific seed from a base seed (splitmix64 finalizer),
/// so independent consumers (data, init, shuffling, fusion weights) never
/// share a sequence.
uint64_t mix_seed(uint64_t base, uint64_t stream);

}  // namespace vildistill
