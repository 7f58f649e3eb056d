#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "edgelam/netsim.hpp"
#include "edgelam/numerics.hpp"

namespace edgelam {

struct CotStep {
  double workload = 0.0;      // FLOPs
  double handoff_size = 0.0;  // bits sent to the next step
  double shard_bytes = 0.0;   // model shard resident on the hosting device
};

/// Undirected graph given as a node count and an edge list.
struct ChainGraph {
  std::size_t nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

/// Connected, acyclic, and no node of degree above two.
bool path_graph_check(const ChainGraph& graph);

struct CotChain {
  std::vector<CotStep> steps;

  ChainGraph graph() const;
};

struct CotInstance {
  CotChain chain;
  std::vector<DeviceProfile> devices;
  Matrix gains;  // D x D, gains(i, j) for the link i -> j
  double link_bandwidth = 1e6;
  double noise_density = 1e-9;

  void validate() const;
  double link_rate(std::size_t from, std::size_t to) const;
};

/// Hosting device per step.
using Placement = std::vector<std::size_t>;

/// Bytes occupied by a step on its device: handoff buffer plus shard.
double step_footprint(const CotStep& step);

/// Binary indicator x[s][d].
std::vector<std::vector<std::uint8_t>> to_indicator(const Placement& placement, std::size_t devices);

/// One device per step and every device within memory capacity.
bool placement_feasible(const CotInstance& instance, const Placement& placement);

/// Compute time of every step plus handoff time between consecutive steps on
/// different devices. Throws ConstraintError on an invalid placement.
double placement_cost(const CotInstance& instance, const Placement& placement);

inline constexpr double kExactEnumerationLimit = 1e6;

/// Exhaustive minimum; ties go to the lexicographically smallest placement.
/// Throws SizeError when D^S exceeds the enumeration limit.
std::optional<Placement> solve_exact(const CotInstance& instance);

/// Greedy construction; each step takes the feasible device with the least
/// marginal cost.
std::optional<Placement> greedy_placement(const CotInstance& instance);

/// Greedy start, then strictly improving moves: reassigning a run of
/// consecutive steps to one device, or swapping the devices of two steps.
/// The first iteration is the greedy pass; each later one applies the best
/// move found in a seeded step order, or, at a local optimum, restarts from
/// the incumbent with a seeded random swap or move. Returns the best
/// placement seen.
std::optional<Placement> solve_local_search(const CotInstance& instance, std::uint64_t seed,
                                            std::size_t iters);

}  // namespace edgelam
