#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "edgelam/cot.hpp"
#include "edgelam/moe.hpp"
#include "edgelam/netsim.hpp"
#include "edgelam/numerics.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::testing {

inline Matrix random_matrix(CounterRng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal(0.0, sd);
  return m;
}

inline Vector random_vector(CounterRng& rng, std::size_t n, double sd = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.normal(0.0, sd);
  return v;
}

inline double log_uniform(CounterRng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Seeded CoT instance with 2..5 steps and 2..5 devices. Capacities hold one
/// to three shards, so many instances are capacity-tight and a few are
/// infeasible.
inline CotInstance random_cot_instance(std::uint64_t seed) {
  CounterRng r(seed, 77);
  const std::size_t s = 2 + r.below(4);
  const std::size_t d = 2 + r.below(4);
  CotInstance inst;
  for (std::size_t i = 0; i < s; ++i)
    inst.chain.steps.push_back({log_uniform(r, 1e9, 5e9), log_uniform(r, 1e5, 2e6), 1e9});
  for (std::size_t j = 0; j < d; ++j) {
    DeviceProfile p;
    p.id = "d" + std::to_string(j);
    p.compute_rate = log_uniform(r, 1e9, 1e10);
    p.memory_capacity = static_cast<double>(1 + r.below(3)) * 1.1e9 + 8e7;
    inst.devices.push_back(p);
  }
  inst.gains = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) inst.gains(i, j) = i == j ? 1.0 : log_uniform(r, 1e-3, 1e-2);
  inst.link_bandwidth = 1e6;
  inst.noise_density = 1e-9;
  return inst;
}

/// Three devices trading link quality against compute speed, two layers of
/// four experts, one arriving task per slot with probability 0.8. Mean work
/// per slot is 1.6 FLOPs against 2.0 FLOPs of total service (load 0.8).
inline OrchestratorConfig three_device_moe(double v, std::uint64_t seed = 9) {
  OrchestratorConfig c;
  const double rates[] = {1.0, 0.6, 0.4};
  const double gains[] = {1e-3, 3e-3, 15e-3};
  for (int i = 0; i < 3; ++i) {
    DeviceProfile p;
    p.id = "d" + std::to_string(i);
    p.compute_rate = rates[i];
    p.channel_gain = gains[i];
    p.tx_power = 1.0;
    c.devices.push_back(p);
  }
  c.link_bandwidth = 1e6;
  c.noise_density = 1e-9;
  for (int l = 0; l < 2; ++l) {
    std::vector<ExpertMicroservice> layer;
    for (int e = 0; e < 4; ++e) {
      ExpertMicroservice ex;
      ex.id = "l" + std::to_string(l) + "e" + std::to_string(e);
      ex.workload_per_call = 1.0;
      ex.output_size = 1e6;
      ex.replicas = e == 3 ? std::vector<std::size_t>{0, 2} : std::vector<std::size_t>{0, 1, 2};
      layer.push_back(ex);
    }
    c.layers.push_back(layer);
  }
  c.top_k = 1;
  c.arrival_prob = 0.8;
  c.v = v;
  c.seed = seed;
  return c;
}

}  // namespace edgelam::testing
