#include "edgelam/cot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

namespace edgelam {

bool path_graph_check(const ChainGraph& graph) {
  const std::size_t n = graph.nodes;
  if (n == 0) return false;
  if (graph.edges.size() != n - 1) return false;
  std::vector<std::size_t> degree(n, 0);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [u, v] : graph.edges) {
    if (u >= n || v >= n || u == v) return false;
    if (++degree[u] > 2 || ++degree[v] > 2) return false;
    const std::size_t ru = find(u);
    const std::size_t rv = find(v);
    if (ru == rv) return false;
    parent[ru] = rv;
  }
  // n - 1 edges without a cycle span all nodes.
  return true;
}

ChainGraph CotChain::graph() const {
  ChainGraph g{steps.size(), {}};
  for (std::size_t s = 0; s + 1 < steps.size(); ++s) g.edges.emplace_back(s, s + 1);
  return g;
}

void CotInstance::validate() const {
  if (chain.steps.empty()) throw InputError("cot: chain has no steps");
  if (!path_graph_check(chain.graph())) throw InputError("cot: chain is not a path graph");
  for (const auto& s : chain.steps) {
    if (!(s.workload >= 0.0) || !(s.handoff_size >= 0.0) || !(s.shard_bytes >= 0.0))
      throw DomainError("cot: step sizes must be >= 0");
  }
  if (devices.empty()) throw InputError("cot: no devices");
  for (const auto& d : devices) d.validate();
  if (gains.rows() != devices.size() || gains.cols() != devices.size())
    throw ShapeError("cot: gain matrix must be D x D");
  if (!(link_bandwidth >= 0.0)) throw DomainError("cot: link bandwidth must be >= 0");
  if (!(noise_density > 0.0)) throw DomainError("cot: noise density must be > 0");
}

double CotInstance::link_rate(std::size_t from, std::size_t to) const {
  return shannon_rate(link_bandwidth, gains(from, to), devices[from].tx_power, noise_density);
}

double step_footprint(const CotStep& step) { return step.handoff_size / 8.0 + step.shard_bytes; }

std::vector<std::vector<std::uint8_t>> to_indicator(const Placement& placement,
                                                    std::size_t devices) {
  std::vector<std::vector<std::uint8_t>> x(placement.size(), std::vector<std::uint8_t>(devices, 0));
  for (std::size_t s = 0; s < placement.size(); ++s) {
    if (placement[s] >= devices) throw ConstraintError("placement names an unknown device");
    x[s][placement[s]] = 1;
  }
  return x;
}

bool placement_feasible(const CotInstance& instance, const Placement& placement) {
  const std::size_t n_dev = instance.devices.size();
  if (placement.size() != instance.chain.steps.size()) return false;
  std::vector<double> load(n_dev, 0.0);
  for (std::size_t s = 0; s < placement.size(); ++s) {
    if (placement[s] >= n_dev) return false;
    load[placement[s]] += step_footprint(instance.chain.steps[s]);
  }
  for (std::size_t d = 0; d < n_dev; ++d)
    if (load[d] > instance.devices[d].memory_capacity) return false;
  return true;
}

namespace {

double handoff_cost(const CotInstance& inst, std::size_t step, std::size_t from, std::size_t to) {
  if (from == to) return 0.0;
  return comm_latency(inst.chain.steps[step].handoff_size, inst.link_rate(from, to));
}

double compute_cost(const CotInstance& inst, std::size_t step, std::size_t device) {
  return comp_latency(inst.chain.steps[step].workload, inst.devices[device].compute_rate);
}

// Cost without the validity check, for solver inner loops.
double raw_cost(const CotInstance& inst, const Placement& p) {
  double c = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) c += compute_cost(inst, s, p[s]);
  for (std::size_t s = 0; s + 1 < p.size(); ++s) c += handoff_cost(inst, s, p[s], p[s + 1]);
  return c;
}

}  // namespace

double placement_cost(const CotInstance& instance, const Placement& placement) {
  if (placement.size() != instance.chain.steps.size())
    throw ConstraintError("placement must assign every step exactly once");
  for (std::size_t d : placement)
    if (d >= instance.devices.size()) throw ConstraintError("placement names an unknown device");
  if (!placement_feasible(instance, placement))
    throw ConstraintError("placement exceeds a device memory capacity");
  return raw_cost(instance, placement);
}

std::optional<Placement> solve_exact(const CotInstance& instance) {
  instance.validate();
  const std::size_t s_count = instance.chain.steps.size();
  const std::size_t d_count = instance.devices.size();
  if (std::pow(static_cast<double>(d_count), static_cast<double>(s_count)) > kExactEnumerationLimit)
    throw SizeError("solve_exact: D^S exceeds the enumeration limit");

  Placement cur(s_count, 0);
  std::optional<Placement> best;
  double best_cost = 0.0;
  for (;;) {
    if (placement_feasible(instance, cur)) {
      const double c = raw_cost(instance, cur);
      // Lexicographic enumeration: strict improvement keeps the smallest on ties.
      if (!best || c < best_cost) {
        best = cur;
        best_cost = c;
      }
    }
    std::size_t s = s_count;
    while (s > 0) {
      --s;
      if (++cur[s] < d_count) break;
      cur[s] = 0;
      if (s == 0) return best;
    }
  }
}

std::optional<Placement> greedy_placement(const CotInstance& instance) {
  instance.validate();
  const std::size_t d_count = instance.devices.size();
  std::vector<double> load(d_count, 0.0);
  Placement p;
  for (std::size_t s = 0; s < instance.chain.steps.size(); ++s) {
    const double need = step_footprint(instance.chain.steps[s]);
    std::optional<std::size_t> best;
    double best_cost = 0.0;
    for (std::size_t d = 0; d < d_count; ++d) {
      if (load[d] + need > instance.devices[d].memory_capacity) continue;
      double c = compute_cost(instance, s, d);
      if (s > 0) c += handoff_cost(instance, s - 1, p[s - 1], d);
      if (!best || c < best_cost) {
        best = d;
        best_cost = c;
      }
    }
    if (!best) return std::nullopt;
    load[*best] += need;
    p.push_back(*best);
  }
  return p;
}

namespace {

// One improving move from p (segment reassignment or pairwise swap), best
// over all moves anchored at the steps in `order`. Returns false at a local
// optimum.
bool improve_once(const CotInstance& inst, Placement& p, std::vector<double>& load, double& cost,
                  std::span<const std::size_t> order) {
  const std::size_t s_count = p.size();
  const std::size_t d_count = inst.devices.size();
  auto fits = [&](std::size_t d, double extra) {
    return load[d] + extra <= inst.devices[d].memory_capacity;
  };
  bool improved = false;
  for (std::size_t s : order) {
    const double need = step_footprint(inst.chain.steps[s]);
    const std::size_t from = p[s];

    // Reassign the segment s..e (e >= s) to one device.
    std::size_t best_d = from;
    std::size_t best_e = s;
    double best_cost = cost;
    const Placement saved = p;
    for (std::size_t e = s; e < s_count; ++e) {
      std::vector<double> moved(d_count, 0.0);
      double seg_need = 0.0;
      for (std::size_t u = s; u <= e; ++u) {
        const double f = step_footprint(inst.chain.steps[u]);
        moved[saved[u]] += f;
        seg_need += f;
      }
      for (std::size_t d = 0; d < d_count; ++d) {
        bool noop = true;
        for (std::size_t u = s; u <= e; ++u) noop = noop && saved[u] == d;
        if (noop || !fits(d, seg_need - moved[d])) continue;
        for (std::size_t u = s; u <= e; ++u) p[u] = d;
        const double c = raw_cost(inst, p);
        if (c < best_cost) {
          best_cost = c;
          best_d = d;
          best_e = e;
        }
      }
      p = saved;
    }

    // Swap hosting devices with another step.
    std::size_t best_t = s_count;
    for (std::size_t t = 0; t < s_count; ++t) {
      const std::size_t other = p[t];
      if (t == s || other == from) continue;
      const double need_t = step_footprint(inst.chain.steps[t]);
      if (!fits(other, need - need_t) || !fits(from, need_t - need)) continue;
      std::swap(p[s], p[t]);
      const double c = raw_cost(inst, p);
      std::swap(p[s], p[t]);
      if (c < best_cost) {
        best_cost = c;
        best_t = t;
      }
    }

    if (!(best_cost < cost)) continue;
    if (best_t != s_count) {
      const std::size_t other = p[best_t];
      const double need_t = step_footprint(inst.chain.steps[best_t]);
      load[from] += need_t - need;
      load[other] += need - need_t;
      std::swap(p[s], p[best_t]);
    } else {
      for (std::size_t u = s; u <= best_e; ++u) {
        const double f = step_footprint(inst.chain.steps[u]);
        load[p[u]] -= f;
        load[best_d] += f;
        p[u] = best_d;
      }
    }
    cost = best_cost;
    improved = true;
  }
  return improved;
}

std::vector<double> loads_of(const CotInstance& inst, const Placement& p) {
  std::vector<double> load(inst.devices.size(), 0.0);
  for (std::size_t s = 0; s < p.size(); ++s) load[p[s]] += step_footprint(inst.chain.steps[s]);
  return load;
}

}  // namespace

std::optional<Placement> solve_local_search(const CotInstance& instance, std::uint64_t seed,
                                            std::size_t iters) {
  if (iters < 1) throw InputError("solve_local_search: iters must be >= 1");
  auto start = greedy_placement(instance);
  if (!start) return std::nullopt;

  const std::size_t s_count = start->size();
  const std::size_t d_count = instance.devices.size();
  Placement best = *start;
  double best_cost = raw_cost(instance, best);
  Placement p = best;
  double cost = best_cost;
  std::vector<double> load = loads_of(instance, p);

  CounterRng rng(seed, 3);
  std::vector<std::size_t> order(s_count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t it = 1; it < iters; ++it) {
    for (std::size_t i = s_count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    if (improve_once(instance, p, load, cost, order)) {
      if (cost < best_cost) {
        best = p;
        best_cost = cost;
      }
      continue;
    }
    // Local optimum: kick the incumbent with a random swap of two steps'
    // devices (or, failing that, a random single move) and climb again.
    p = best;
    cost = best_cost;
    load = loads_of(instance, p);
    const std::size_t s = rng.below(s_count);
    const std::size_t t = rng.below(s_count);
    const std::size_t d = rng.below(d_count);
    const double need_s = step_footprint(instance.chain.steps[s]);
    const double need_t = step_footprint(instance.chain.steps[t]);
    const auto& cap = instance.devices;
    if (p[s] != p[t] && load[p[t]] - need_t + need_s <= cap[p[t]].memory_capacity &&
        load[p[s]] - need_s + need_t <= cap[p[s]].memory_capacity) {
      load[p[t]] += need_s - need_t;
      load[p[s]] += need_t - need_s;
      std::swap(p[s], p[t]);
    } else if (d != p[s] && load[d] + need_s <= cap[d].memory_capacity) {
      load[p[s]] -= need_s;
      load[d] += need_s;
      p[s] = d;
    }
    cost = raw_cost(instance, p);
  }
  return best;
}

}  // namespace edgelam
