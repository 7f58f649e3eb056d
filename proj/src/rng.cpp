#include "edgelam/rng.hpp"

#include <cmath>
#include <numbers>

namespace edgelam {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamSalt = 0x632BE59BD9B4E019ULL;
}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64_mix(seed ^ splitmix64_mix(a * kGolden + splitmix64_mix(b + kStreamSalt)));
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64_mix(seed ^ splitmix64_mix(stream + kStreamSalt))) {}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGolden);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double CounterRng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace edgelam
