#pragma once

#include <cstdint>

namespace edgelam {

/// Counter-based generator "splitmix64-ctr/v1".
///
/// Draw n of stream s under seed k is
///   key   = mix(k ^ mix(s + 0x632BE59BD9B4E019))
///   out_n = mix(key + (n + 1) * 0x9E3779B97F4A7C15)
/// where mix is the SplitMix64 finalizer. Uniforms take the top 53 bits,
/// normals use Box-Muller on two consecutive uniforms (cosine branch only).
/// Any implementation of these three lines reproduces the streams bit-exactly.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

/// Derive a sub-seed from a seed and a tuple of small integers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace edgelam
