#include "edgelam/netsim.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

namespace edgelam {

void DeviceProfile::validate() const {
  const std::string who = "device '" + id + "': ";
  if (!(compute_rate > 0.0) || !std::isfinite(compute_rate))
    throw DomainError(who + "compute_rate must be > 0");
  if (!(memory_capacity > 0.0)) throw DomainError(who + "memory_capacity must be > 0");
  if (!(channel_gain >= 0.0) || !std::isfinite(channel_gain))
    throw DomainError(who + "channel_gain must be >= 0");
  if (!(tx_power >= 0.0) || !std::isfinite(tx_power))
    throw DomainError(who + "tx_power must be >= 0");
  if (local_rank < 1) throw DomainError(who + "local_rank must be >= 1");
}

double ChannelAllocation::allocated() const {
  double s = 0.0;
  for (double b : bandwidth) s += b;
  return s;
}

void ChannelAllocation::validate() const {
  if (!(noise_density > 0.0)) throw DomainError("noise density must be > 0");
  for (double b : bandwidth)
    if (!(b >= 0.0)) throw DomainError("negative bandwidth allocation");
  if (allocated() > total_bandwidth) throw DomainError("allocation exceeds total bandwidth");
}

SlotClock::SlotClock(double slot_duration) : duration_(slot_duration) {
  if (!(slot_duration > 0.0)) throw DomainError("slot duration must be > 0");
}

double shannon_rate(double bandwidth, double gain, double power, double noise_density) {
  if (!(bandwidth >= 0.0) || !(gain >= 0.0) || !(power >= 0.0))
    throw DomainError("shannon_rate: negative input");
  if (!(noise_density > 0.0)) throw DomainError("shannon_rate: noise density must be > 0");
  const double signal = gain * power;
  if (bandwidth == 0.0 || signal == 0.0) return 0.0;
  return bandwidth * std::log2(1.0 + signal / (noise_density * bandwidth));
}

double shannon_rate_limit(double gain, double power, double noise_density) {
  return gain * power / (noise_density * std::numbers::ln2);
}

std::optional<double> min_bandwidth_for_rate(double rate, double gain, double power,
                                             double noise_density, double max_bandwidth) {
  if (rate <= 0.0) return 0.0;
  if (shannon_rate(max_bandwidth, gain, power, noise_density) < rate) return std::nullopt;
  double lo = 0.0;
  double hi = max_bandwidth;
  // hi stays feasible throughout.
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (shannon_rate(mid, gain, power, noise_density) >= rate) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double comm_latency(double bits, double rate) {
  if (!(bits >= 0.0)) throw DomainError("comm_latency: negative bits");
  if (bits == 0.0) return 0.0;
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  return bits / rate;
}

double comp_latency(double flops, double compute_rate) {
  if (!(flops >= 0.0)) throw DomainError("comp_latency: negative workload");
  if (!(compute_rate > 0.0)) throw DomainError("comp_latency: compute rate must be > 0");
  return flops / compute_rate;
}

double energy(double power, double duration) {
  if (!(power >= 0.0) || !(duration >= 0.0)) throw DomainError("energy: negative input");
  if (power == 0.0) return 0.0;
  return power * duration;
}

double fading_gain(std::uint64_t seed, std::size_t device, std::uint64_t slot) {
  CounterRng rng(derive_seed(seed, device, slot), 0);
  double u = rng.uniform();
  return -std::log1p(-u);
}

}  // namespace edgelam
