#include "edgelam/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

namespace edgelam {

void ExpertMicroservice::validate() const {
  if (!(workload_per_call > 0.0)) throw DomainError("expert '" + id + "': workload must be > 0");
  if (!(output_size >= 0.0)) throw DomainError("expert '" + id + "': output size must be >= 0");
  if (replicas.empty()) throw InputError("expert '" + id + "': no replicas");
}

void MicroserviceDag::add_edge(std::size_t from, std::size_t to) {
  if (from >= out_.size() || to >= out_.size()) throw InputError("dag edge out of range");
  out_[from].push_back(to);
}

std::vector<std::size_t> MicroserviceDag::topological_order() const {
  std::vector<std::size_t> indeg(out_.size(), 0);
  for (const auto& succ : out_)
    for (std::size_t t : succ) ++indeg[t];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < out_.size(); ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t n = ready.top();
    ready.pop();
    order.push_back(n);
    for (std::size_t t : out_[n])
      if (--indeg[t] == 0) ready.push(t);
  }
  if (order.size() != out_.size()) throw InputError("microservice graph has a cycle");
  return order;
}

bool MicroserviceDag::is_acyclic() const {
  try {
    topological_order();
    return true;
  } catch (const InputError&) {
    return false;
  }
}

std::vector<std::size_t> gate_select(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) throw InputError("gate_select: k outside [1, experts]");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

VirtualQueue queue_update(const VirtualQueue& q, double arrival, double service) {
  if (!(arrival >= 0.0) || !(service >= 0.0))
    throw DomainError("queue_update: arrival and service must be >= 0");
  return {q.device, std::max(q.backlog + arrival - service, 0.0)};
}

std::vector<double> assignment_arrivals(std::span<const ExpertCall> calls,
                                        const Assignment& assignment, std::size_t devices) {
  if (assignment.size() != calls.size()) throw InputError("assignment length differs from calls");
  std::vector<double> a(devices, 0.0);
  for (std::size_t c = 0; c < calls.size(); ++c) {
    if (assignment[c] >= devices) throw InputError("assignment names an unknown device");
    a[assignment[c]] += calls[c].workload;
  }
  return a;
}

Assignment drift_plus_penalty_decision(std::span<const VirtualQueue> queues,
                                       std::span<const ExpertCall> calls,
                                       std::span<const Assignment> candidates, double v,
                                       const AssignmentCost& cost) {
  if (candidates.empty()) throw SchedulingError("drift_plus_penalty_decision: no candidates");
  std::size_t devices = 0;
  for (const auto& q : queues) devices = std::max(devices, q.device + 1);

  const Assignment* best = nullptr;
  double best_score = 0.0;
  for (const Assignment& cand : candidates) {
    const std::vector<double> a = assignment_arrivals(calls, cand, devices);
    double drift = 0.0;
    for (const auto& q : queues) drift += q.backlog * a[q.device];
    const double score = drift + v * cost(cand);
    if (!best || score < best_score || (score == best_score && cand < *best)) {
      best = &cand;
      best_score = score;
    }
  }
  return *best;
}

std::vector<Assignment> enumerate_assignments(std::span<const ExpertCall> calls,
                                              const std::set<std::size_t>& failed,
                                              std::size_t limit) {
  std::vector<std::vector<std::size_t>> live(calls.size());
  std::size_t total = 1;
  for (std::size_t c = 0; c < calls.size(); ++c) {
    for (std::size_t d : calls[c].replicas)
      if (!failed.contains(d)) live[c].push_back(d);
    std::sort(live[c].begin(), live[c].end());
    if (live[c].empty()) return {};
    if (total > limit / live[c].size()) return {};
    total *= live[c].size();
  }
  if (total > limit) return {};
  std::vector<Assignment> out;
  out.reserve(total);
  Assignment cur(calls.size());
  std::vector<std::size_t> pos(calls.size(), 0);
  for (;;) {
    for (std::size_t c = 0; c < calls.size(); ++c) cur[c] = live[c][pos[c]];
    out.push_back(cur);
    // Odometer with the last call varying fastest keeps the output lexicographic.
    std::size_t c = calls.size();
    while (c > 0) {
      --c;
      if (++pos[c] < live[c].size()) break;
      pos[c] = 0;
      if (c == 0) return out;
    }
    if (calls.empty()) return out;
  }
}

void OrchestratorConfig::validate() const {
  if (devices.empty()) throw InputError("orchestrator: no devices");
  for (const auto& d : devices) d.validate();
  if (layers.empty()) throw InputError("orchestrator: no MoE layers");
  for (const auto& layer : layers) {
    if (layer.empty()) throw InputError("orchestrator: empty layer");
    if (top_k < 1 || top_k > layer.size()) throw InputError("orchestrator: top_k outside [1, experts]");
    for (const auto& e : layer) {
      e.validate();
      for (std::size_t r : e.replicas)
        if (r >= devices.size()) throw InputError("expert '" + e.id + "': unknown replica device");
    }
  }
  if (!(arrival_prob >= 0.0 && arrival_prob <= 1.0))
    throw DomainError("orchestrator: arrival_prob outside [0,1]");
  if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("orchestrator: V must be finite and >= 0");
  if (!(slot_duration > 0.0)) throw DomainError("orchestrator: slot duration must be > 0");
  if (!(noise_density > 0.0)) throw DomainError("orchestrator: noise density must be > 0");
  if (!(link_bandwidth >= 0.0)) throw DomainError("orchestrator: link bandwidth must be >= 0");
}

CallCost call_cost(const OrchestratorConfig& config, const ExpertCall& call, std::size_t device,
                   double gain) {
  const DeviceProfile& p = config.devices[device];
  const double rate = shannon_rate(config.link_bandwidth, gain, p.tx_power, config.noise_density);
  const double t = comm_latency(call.output_size, rate);
  return {t, std::isfinite(t) ? energy(p.tx_power, t) : t};
}

std::vector<InferenceTask> sample_tasks(const OrchestratorConfig& config, std::uint64_t slot) {
  CounterRng rng(derive_seed(config.seed, slot), 11);
  std::vector<InferenceTask> tasks;
  for (std::size_t t = 0; t < config.tasks_per_slot; ++t) {
    if (!rng.bernoulli(config.arrival_prob)) continue;
    InferenceTask task;
    task.arrival_slot = slot;
    std::vector<std::vector<std::size_t>> call_ids;
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
      const auto& layer = config.layers[l];
      std::vector<double> scores(layer.size());
      for (double& s : scores) s = rng.uniform();
      task.selected.push_back(gate_select(scores, config.top_k));
      call_ids.emplace_back();
      for (std::size_t e : task.selected.back()) {
        const ExpertMicroservice& ex = layer[e];
        call_ids.back().push_back(task.calls.size());
        task.calls.push_back({l, e, ex.workload_per_call, ex.output_size, ex.replicas});
      }
    }
    task.dag = MicroserviceDag(task.calls.size());
    for (std::size_t l = 0; l + 1 < call_ids.size(); ++l)
      for (std::size_t a : call_ids[l])
        for (std::size_t b : call_ids[l + 1]) task.dag.add_edge(a, b);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

namespace {

// Per-call greedy when the candidate set is too large to enumerate.
Assignment greedy_assignment(const OrchestratorConfig& config, std::span<const ExpertCall> calls,
                             std::span<const VirtualQueue> queues, std::span<const double> gains) {
  std::vector<double> load(config.devices.size(), 0.0);
  Assignment out;
  for (const ExpertCall& call : calls) {
    std::vector<std::size_t> live;
    for (std::size_t d : call.replicas)
      if (!config.failed.contains(d)) live.push_back(d);
    std::sort(live.begin(), live.end());
    if (live.empty()) throw SchedulingError("expert call has no live replica");
    std::size_t best = live.front();
    double best_score = 0.0;
    bool first = true;
    for (std::size_t d : live) {
      const CallCost cc = call_cost(config, call, d, gains[d]);
      const double score = (queues[d].backlog + load[d]) * call.workload +
                           config.v * (config.w_latency * cc.latency + config.w_energy * cc.energy);
      if (first || score < best_score) {
        best = d;
        best_score = score;
        first = false;
      }
    }
    load[best] += call.workload;
    out.push_back(best);
  }
  return out;
}

}  // namespace

OrchestrationTrace orchestrate(const OrchestratorConfig& config, std::uint64_t slots) {
  if (slots < 1) throw InputError("orchestrate: need at least one slot");
  config.validate();
  const std::size_t n = config.devices.size();

  std::vector<VirtualQueue> queues(n);
  for (std::size_t i = 0; i < n; ++i) queues[i].device = i;

  OrchestrationTrace trace;
  double cost_sum = 0.0;
  double backlog_sum = 0.0;
  SlotClock clock(config.slot_duration);
  for (; clock.slot() < slots; clock.advance()) {
    const std::uint64_t t = clock.slot();
    SlotRecord rec;
    rec.slot = t;
    for (const auto& q : queues) rec.backlog_before.push_back(q.backlog);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = config.devices[i].channel_gain;
      rec.gains.push_back(config.fading ? g * fading_gain(config.seed, i, t) : g);
    }
    for (auto& task : sample_tasks(config, t))
      rec.calls.insert(rec.calls.end(), task.calls.begin(), task.calls.end());

    if (!rec.calls.empty()) {
      const auto cost = [&](const Assignment& a) {
        double c = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          const CallCost cc = call_cost(config, rec.calls[k], a[k], rec.gains[a[k]]);
          c += config.w_latency * cc.latency + config.w_energy * cc.energy;
        }
        return c;
      };
      const auto candidates = enumerate_assignments(rec.calls, config.failed, config.max_candidates);
      if (!candidates.empty()) {
        rec.assignment = drift_plus_penalty_decision(queues, rec.calls, candidates, config.v, cost);
      } else {
        rec.assignment = greedy_assignment(config, rec.calls, queues, rec.gains);
        rec.greedy = true;
      }
      rec.cost = cost(rec.assignment);
    }

    const std::vector<double> arrivals = rec.calls.empty()
                                             ? std::vector<double>(n, 0.0)
                                             : assignment_arrivals(rec.calls, rec.assignment, n);
    for (std::size_t i = 0; i < n; ++i) {
      const double service = config.devices[i].compute_rate * config.slot_duration;
      queues[i] = queue_update(queues[i], arrivals[i], service);
      rec.backlog_after.push_back(queues[i].backlog);
    }
    cost_sum += rec.cost;
    backlog_sum += std::accumulate(rec.backlog_after.begin(), rec.backlog_after.end(), 0.0);
    trace.slots.push_back(std::move(rec));
  }
  trace.time_average_cost = cost_sum / static_cast<double>(slots);
  trace.time_average_backlog = backlog_sum / static_cast<double>(slots);
  return trace;
}

}  // namespace edgelam
