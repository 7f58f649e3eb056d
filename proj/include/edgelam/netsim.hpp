#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace edgelam {

/// Static description of one edge device.
struct DeviceProfile {
  std::string id;
  double compute_rate = 1.0;     // FLOP/s
  double memory_capacity = 1.0;  // bytes
  double channel_gain = 1.0;     // dimensionless power gain
  double tx_power = 1.0;         // W
  std::size_t local_rank = 1;    // LoRA rank r_i

  /// Throws DomainError when an invariant is violated.
  void validate() const;
};

/// FDMA split of a shared uplink band.
struct ChannelAllocation {
  std::vector<double> bandwidth;  // Hz, one entry per allocated device
  double noise_density = 1e-9;    // W/Hz
  double total_bandwidth = 0.0;   // Hz

  double allocated() const;
  void validate() const;
};

class SlotClock {
 public:
  explicit SlotClock(double slot_duration = 1.0);

  std::uint64_t slot() const { return slot_; }
  double slot_duration() const { return duration_; }
  double now() const { return static_cast<double>(slot_) * duration_; }
  void advance() { ++slot_; }

 private:
  std::uint64_t slot_ = 0;
  double duration_;
};

/// B * log2(1 + gain*power / (N0*B)); zero for B == 0 or a zero numerator.
double shannon_rate(double bandwidth, double gain, double power, double noise_density);

/// Rate approached as bandwidth grows without bound: gain*power / (N0 ln 2).
double shannon_rate_limit(double gain, double power, double noise_density);

/// Smallest bandwidth in [0, max_bandwidth] whose Shannon rate reaches
/// `rate`, found by bisection. nullopt when even max_bandwidth falls short.
std::optional<double> min_bandwidth_for_rate(double rate, double gain, double power,
                                             double noise_density, double max_bandwidth);

double comm_latency(double bits, double rate);
double comp_latency(double flops, double compute_rate);
double energy(double power, double duration);

/// Seeded block-fading power gains: unit-mean exponential draws, one per
/// (device, slot). Identical arguments always yield the same value.
double fading_gain(std::uint64_t seed, std::size_t device, std::uint64_t slot);

}  // namespace edgelam
