#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "edgelam/netsim.hpp"
#include "edgelam/numerics.hpp"

namespace edgelam {

struct ExpertMicroservice {
  std::string id;
  double workload_per_call = 1.0;  // FLOPs
  double output_size = 0.0;        // bits
  std::vector<std::size_t> replicas;

  void validate() const;
};

struct VirtualQueue {
  std::size_t device = 0;
  double backlog = 0.0;  // FLOPs
};

/// Directed graph of microservice calls.
class MicroserviceDag {
 public:
  explicit MicroserviceDag(std::size_t nodes = 0) : out_(nodes) {}

  std::size_t size() const { return out_.size(); }
  void add_edge(std::size_t from, std::size_t to);
  const std::vector<std::size_t>& successors(std::size_t node) const { return out_[node]; }

  /// Kahn order, smallest ready node first. Throws InputError on a cycle.
  std::vector<std::size_t> topological_order() const;
  bool is_acyclic() const;

 private:
  std::vector<std::vector<std::size_t>> out_;
};

struct ExpertCall {
  std::size_t layer = 0;
  std::size_t expert = 0;  // index within the layer
  double workload = 0.0;
  double output_size = 0.0;
  std::vector<std::size_t> replicas;  // devices able to serve the call
};

/// Gate-selected expert calls of one request, layer by layer.
struct InferenceTask {
  std::uint64_t arrival_slot = 0;
  std::vector<std::vector<std::size_t>> selected;  // per layer, expert indices
  std::vector<ExpertCall> calls;                   // flattened in layer order
  MicroserviceDag dag;                             // call -> call dependencies
};

/// Device index per call.
using Assignment = std::vector<std::size_t>;
using AssignmentCost = std::function<double(const Assignment&)>;

/// Indices of the k largest scores, ties to the lower index, ascending.
std::vector<std::size_t> gate_select(std::span<const double> scores, std::size_t k);

/// Q(t+1) = max(Q(t) + arrival - service, 0).
VirtualQueue queue_update(const VirtualQueue& q, double arrival, double service);

/// Per-device work added by an assignment.
std::vector<double> assignment_arrivals(std::span<const ExpertCall> calls,
                                        const Assignment& assignment, std::size_t devices);

/// argmin over candidates of sum_i Q_i a_i + V * cost; ties go to the
/// lexicographically smallest device vector. Throws SchedulingError when
/// there are no candidates.
Assignment drift_plus_penalty_decision(std::span<const VirtualQueue> queues,
                                       std::span<const ExpertCall> calls,
                                       std::span<const Assignment> candidates, double v,
                                       const AssignmentCost& cost);

/// Cartesian product of live replicas, lexicographic. Empty when some call
/// has no live replica or the product exceeds `limit`.
std::vector<Assignment> enumerate_assignments(std::span<const ExpertCall> calls,
                                              const std::set<std::size_t>& failed,
                                              std::size_t limit);

struct OrchestratorConfig {
  std::vector<DeviceProfile> devices;
  double link_bandwidth = 1e6;  // Hz per device link
  double noise_density = 1e-9;
  std::vector<std::vector<ExpertMicroservice>> layers;
  std::size_t top_k = 1;
  double arrival_prob = 1.0;    // chance that a task arrives in a slot
  std::size_t tasks_per_slot = 1;
  double v = 1.0;
  double w_latency = 1.0;
  double w_energy = 0.0;
  double slot_duration = 1.0;
  std::set<std::size_t> failed;
  bool fading = false;
  std::size_t max_candidates = 4096;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SlotRecord {
  std::uint64_t slot = 0;
  std::vector<ExpertCall> calls;
  std::vector<double> backlog_before;
  std::vector<double> gains;  // effective channel gains this slot
  Assignment assignment;
  bool greedy = false;
  double cost = 0.0;
  std::vector<double> backlog_after;
};

struct OrchestrationTrace {
  std::vector<SlotRecord> slots;
  double time_average_cost = 0.0;
  double time_average_backlog = 0.0;  // sum over devices, averaged over slots
};

/// Communication latency and transmit energy of serving `call` on `device`.
struct CallCost {
  double latency = 0.0;
  double energy = 0.0;
};
CallCost call_cost(const OrchestratorConfig& config, const ExpertCall& call, std::size_t device,
                   double gain);

/// Draw the slot's tasks from the seeded gate-score stream.
std::vector<InferenceTask> sample_tasks(const OrchestratorConfig& config, std::uint64_t slot);

OrchestrationTrace orchestrate(const OrchestratorConfig& config, std::uint64_t slots);

}  // namespace edgelam
