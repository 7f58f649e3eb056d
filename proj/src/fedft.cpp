#include "edgelam/fedft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

namespace edgelam {

LoraAdapter::LoraAdapter(Matrix a_factor, Matrix b_factor)
    : a(std::move(a_factor)), b(std::move(b_factor)) {
  if (a.cols() != b.rows()) {
    throw ShapeError("adapter factors disagree on rank: A has " + std::to_string(a.cols()) +
                     " columns, B has " + std::to_string(b.rows()) + " rows");
  }
  const std::size_t r = a.cols();
  if (r < 1 || r > std::min(a.rows(), b.cols())) {
    throw RankError("adapter rank " + std::to_string(r) + " outside [1, min(d,k)]");
  }
}

LoraAdapter zero_pad(const LoraAdapter& adapter, std::size_t target_rank) {
  const std::size_t r = adapter.rank();
  if (target_rank < r) {
    throw RankError("zero_pad: target rank " + std::to_string(target_rank) +
                    " below adapter rank " + std::to_string(r));
  }
  Matrix a(adapter.rows(), target_rank);
  for (std::size_t i = 0; i < adapter.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) a(i, j) = adapter.a(i, j);
  Matrix b(target_rank, adapter.cols());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < adapter.cols(); ++j) b(i, j) = adapter.b(i, j);
  return LoraAdapter(std::move(a), std::move(b));
}

LoraAdapter truncate(const LoraAdapter& adapter, std::size_t target_rank) {
  if (target_rank < 1) throw RankError("truncate: target rank must be >= 1");
  if (target_rank > adapter.rank()) {
    throw RankError("truncate: target rank " + std::to_string(target_rank) +
                    " above adapter rank " + std::to_string(adapter.rank()));
  }
  Matrix a(adapter.rows(), target_rank);
  for (std::size_t i = 0; i < adapter.rows(); ++i)
    for (std::size_t j = 0; j < target_rank; ++j) a(i, j) = adapter.a(i, j);
  Matrix b(target_rank, adapter.cols());
  for (std::size_t i = 0; i < target_rank; ++i)
    for (std::size_t j = 0; j < adapter.cols(); ++j) b(i, j) = adapter.b(i, j);
  return LoraAdapter(std::move(a), std::move(b));
}

LoraAdapter aggregate_hetero(std::span<const LoraAdapter> adapters,
                             std::span<const double> weights) {
  if (adapters.empty()) throw InputError("aggregate_hetero: no adapters");
  if (weights.size() != adapters.size())
    throw InputError("aggregate_hetero: one weight per adapter required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InputError("aggregate_hetero: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("aggregate_hetero: weights must sum to 1");

  const std::size_t d = adapters.front().rows();
  const std::size_t k = adapters.front().cols();
  std::size_t r_max = 0;
  for (const auto& ad : adapters) {
    if (ad.rows() != d || ad.cols() != k) throw ShapeError("aggregate_hetero: d,k mismatch");
    r_max = std::max(r_max, ad.rank());
  }

  Matrix a(d, r_max);
  Matrix b(r_max, k);
  for (std::size_t n = 0; n < adapters.size(); ++n) {
    const LoraAdapter padded = zero_pad(adapters[n], r_max);
    a = axpy(a, weights[n], padded.a);
    b = axpy(b, weights[n], padded.b);
  }
  return LoraAdapter(std::move(a), std::move(b));
}

namespace {

void check_batch(const FrozenBase& base, const LoraAdapter& adapter, const RegressionData& batch) {
  const Matrix& w0 = base.weights();
  if (w0.rows() != adapter.rows() || w0.cols() != adapter.cols())
    throw ShapeError("frozen base and adapter dimensions differ");
  if (batch.empty()) throw InputError("empty batch");
  for (const auto& s : batch) {
    if (s.x.size() != w0.cols() || s.y.size() != w0.rows())
      throw ShapeError("sample dimensions do not match the base weights");
  }
}

}  // namespace

double lora_loss(const FrozenBase& base, const LoraAdapter& adapter, const RegressionData& batch) {
  check_batch(base, adapter, batch);
  const Matrix w = add(base.weights(), adapter.delta());
  double total = 0.0;
  for (const auto& s : batch) {
    const Vector pred = matvec(w, s.x);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = pred[i] - s.y[i];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

LoraGradient lora_gradient(const FrozenBase& base, const LoraAdapter& adapter,
                           const RegressionData& batch) {
  check_batch(base, adapter, batch);
  const Matrix w = add(base.weights(), adapter.delta());
  // dL/dW = (2/n) sum r x^T
  Matrix g(w.rows(), w.cols());
  const double c = 2.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const Vector pred = matvec(w, s.x);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double r = c * (pred[i] - s.y[i]);
      if (r == 0.0) continue;
      for (std::size_t j = 0; j < w.cols(); ++j) g(i, j) += r * s.x[j];
    }
  }
  return {matmul(g, transpose(adapter.b)), matmul(transpose(adapter.a), g)};
}

LoraAdapter lora_sgd_step(const FrozenBase& base, const LoraAdapter& adapter,
                          const RegressionData& batch, double lr) {
  if (!(lr >= 0.0)) throw DomainError("lora_sgd_step: learning rate must be >= 0");
  if (lr == 0.0) {
    check_batch(base, adapter, batch);
    return adapter;
  }
  const LoraGradient g = lora_gradient(base, adapter, batch);
  return LoraAdapter(axpy(adapter.a, -lr, g.da), axpy(adapter.b, -lr, g.db));
}

// ---------------------------------------------------------------------------

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    s += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  }
  return s;
}

ProbVector predict(const SharedModule& module, std::span<const double> feature) {
  const Vector logits = matvec(module.weights, feature);
  return softmax(logits);
}

double distill_loss(const SharedModule& student, std::span<const TeacherExample> examples) {
  if (examples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& ex : examples) s += kl_divergence(ex.target, predict(student, ex.feature));
  return s / static_cast<double>(examples.size());
}

Matrix distill_gradient(const SharedModule& student, std::span<const TeacherExample> examples) {
  const Matrix& w = student.weights;
  Matrix g(w.rows(), w.cols());
  if (examples.empty()) return g;
  const double c = 1.0 / static_cast<double>(examples.size());
  for (const auto& ex : examples) {
    const ProbVector q = predict(student, ex.feature);
    if (ex.target.size() != q.size()) throw ShapeError("teacher and student class counts differ");
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double e = c * (q[i] - ex.target[i]);
      for (std::size_t j = 0; j < w.cols(); ++j) g(i, j) += e * ex.feature[j];
    }
  }
  return g;
}

SharedModule distill_step(const SharedModule& student, std::span<const TeacherExample> examples,
                          double lr) {
  if (!(lr >= 0.0)) throw DomainError("distill_step: learning rate must be >= 0");
  const Matrix g = distill_gradient(student, examples);
  if (lr == 0.0) return student;
  return SharedModule{axpy(student.weights, -lr, g)};
}

MutualDistillResult mutual_distill(const SharedModule& shared, const SharedModule& local,
                                   std::span<const Vector> features, double lr) {
  std::vector<TeacherExample> from_local;
  from_local.reserve(features.size());
  for (const auto& f : features) from_local.push_back({f, predict(local, f)});
  SharedModule new_shared = distill_step(shared, from_local, lr);

  std::vector<TeacherExample> from_shared;
  from_shared.reserve(features.size());
  for (const auto& f : features) from_shared.push_back({f, predict(new_shared, f)});
  SharedModule new_local = distill_step(local, from_shared, lr);
  return {std::move(new_shared), std::move(new_local)};
}

// ---------------------------------------------------------------------------

namespace {

struct SubsetInputs {
  std::vector<double> comp;
  std::vector<double> bits;
  std::vector<double> gain_power;
};

double required_bandwidth(double tau, double comp, double bits, const DeviceProfile& p,
                          double total_bandwidth, double noise_density) {
  if (bits == 0.0) return tau >= comp ? 0.0 : std::numeric_limits<double>::infinity();
  const double slack = tau - comp;
  if (!(slack > 0.0)) return std::numeric_limits<double>::infinity();
  auto b = min_bandwidth_for_rate(bits / slack, p.channel_gain, p.tx_power, noise_density,
                                  total_bandwidth);
  return b ? *b : std::numeric_limits<double>::infinity();
}

// Fills bandwidth for tau; returns the sum (infinite when unreachable).
double bandwidth_at(double tau, std::span<const DeviceProfile> profiles,
                    std::span<const std::size_t> subset, const SubsetInputs& in,
                    double total_bandwidth, double noise_density, std::vector<double>& out) {
  out.assign(subset.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < subset.size(); ++j) {
    out[j] = required_bandwidth(tau, in.comp[j], in.bits[j], profiles[subset[j]],
                                total_bandwidth, noise_density);
    sum += out[j];
    if (!(sum <= total_bandwidth)) return std::numeric_limits<double>::infinity();
  }
  return sum;
}

double device_latency(const DeviceProfile& p, double comp, double bits, double bandwidth,
                      double noise_density) {
  const double rate = shannon_rate(bandwidth, p.channel_gain, p.tx_power, noise_density);
  return comp + comm_latency(bits, rate);
}

std::vector<std::string> ids_of(std::span<const DeviceProfile> profiles,
                                std::span<const std::size_t> subset) {
  std::vector<std::string> ids;
  for (std::size_t i : subset) ids.push_back(profiles[i].id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// True when a is preferred over b.
bool better(const Selection& a, const Selection& b, std::span<const DeviceProfile> profiles) {
  if (a.selected.size() != b.selected.size()) return a.selected.size() > b.selected.size();
  if (a.latency != b.latency) return a.latency < b.latency;
  return ids_of(profiles, a.selected) < ids_of(profiles, b.selected);
}

}  // namespace

std::optional<Selection> allocate_bandwidth(std::span<const DeviceProfile> profiles,
                                            std::span<const std::size_t> subset,
                                            double total_bandwidth,
                                            std::span<const double> upload_bits,
                                            std::span<const double> local_flops,
                                            double noise_density) {
  if (subset.empty()) throw InputError("allocate_bandwidth: empty subset");
  if (!(total_bandwidth > 0.0)) throw DomainError("total bandwidth must be > 0");
  if (!(noise_density > 0.0)) throw DomainError("noise density must be > 0");

  SubsetInputs in;
  bool any_bits = false;
  for (std::size_t i : subset) {
    const DeviceProfile& p = profiles[i];
    in.comp.push_back(comp_latency(local_flops[i], p.compute_rate));
    in.bits.push_back(upload_bits[i]);
    in.gain_power.push_back(p.channel_gain * p.tx_power);
    if (upload_bits[i] > 0.0) {
      any_bits = true;
      if (in.gain_power.back() == 0.0) return std::nullopt;
    }
  }

  const double tau_lo0 = *std::max_element(in.comp.begin(), in.comp.end());
  std::vector<double> bw;
  if (any_bits) {
    // Equal split gives a feasible upper bracket.
    const double share = total_bandwidth / static_cast<double>(subset.size());
    double tau_hi = tau_lo0;
    for (std::size_t j = 0; j < subset.size(); ++j) {
      tau_hi = std::max(tau_hi, device_latency(profiles[subset[j]], in.comp[j], in.bits[j], share,
                                               noise_density));
    }
    // Nudge until the bracket is strictly feasible under the bisection's own test.
    while (!std::isfinite(
        bandwidth_at(tau_hi, profiles, subset, in, total_bandwidth, noise_density, bw))) {
      tau_hi = tau_lo0 + (tau_hi - tau_lo0) * (1.0 + 1e-9) + 1e-300;
    }
    double tau_lo = tau_lo0;
    for (int it = 0; it < 100 && tau_hi - tau_lo > 1e-13 * tau_hi; ++it) {
      const double mid = 0.5 * (tau_lo + tau_hi);
      std::vector<double> trial;
      if (std::isfinite(
              bandwidth_at(mid, profiles, subset, in, total_bandwidth, noise_density, trial))) {
        tau_hi = mid;
      } else {
        tau_lo = mid;
      }
    }
    bandwidth_at(tau_hi, profiles, subset, in, total_bandwidth, noise_density, bw);
  } else {
    bw.assign(subset.size(), 0.0);
  }

  // Hand out what is left proportionally (equally when nothing was needed).
  double used = std::accumulate(bw.begin(), bw.end(), 0.0);
  if (used > 0.0) {
    const double s = total_bandwidth / used;
    for (double& b : bw) b *= s;
  } else {
    for (double& b : bw) b = total_bandwidth / static_cast<double>(bw.size());
  }
  for (;;) {
    used = std::accumulate(bw.begin(), bw.end(), 0.0);
    if (used <= total_bandwidth) break;
    auto it = std::max_element(bw.begin(), bw.end());
    *it = std::nextafter(*it - (used - total_bandwidth), 0.0);
    if (*it < 0.0) *it = 0.0;
  }

  Selection sel;
  sel.selected.assign(subset.begin(), subset.end());
  sel.allocation.bandwidth = bw;
  sel.allocation.noise_density = noise_density;
  sel.allocation.total_bandwidth = total_bandwidth;
  sel.latency = 0.0;
  for (std::size_t j = 0; j < subset.size(); ++j) {
    sel.latency = std::max(sel.latency, device_latency(profiles[subset[j]], in.comp[j], in.bits[j],
                                                       bw[j], noise_density));
  }
  if (!std::isfinite(sel.latency)) return std::nullopt;
  return sel;
}

std::optional<Selection> select_devices_and_bandwidth(std::span<const DeviceProfile> profiles,
                                                      double total_bandwidth,
                                                      std::span<const double> upload_bits,
                                                      std::span<const double> local_flops,
                                                      const SelectionOptions& options) {
  const std::size_t n = profiles.size();
  if (n == 0) throw InputError("select_devices_and_bandwidth: no devices");
  if (!(total_bandwidth > 0.0)) throw DomainError("total bandwidth must be > 0");
  if (upload_bits.size() != n || local_flops.size() != n)
    throw InputError("select_devices_and_bandwidth: one upload size and workload per device");
  for (const auto& p : profiles) p.validate();

  if (n > kMaxExhaustiveDevices) {
    if (!options.greedy_fallback) {
      throw SizeError("select_devices_and_bandwidth: " + std::to_string(n) +
                      " devices exceed the exhaustive limit of " +
                      std::to_string(kMaxExhaustiveDevices) + "; enable greedy_fallback");
    }
    // Greedy: admit devices in order of their solo latency while the deadline holds.
    std::vector<std::pair<double, std::size_t>> solo;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t one[] = {i};
      auto s = allocate_bandwidth(profiles, one, total_bandwidth, upload_bits, local_flops,
                                  options.noise_density);
      if (s) solo.emplace_back(s->latency, i);
    }
    std::sort(solo.begin(), solo.end());
    std::vector<std::size_t> chosen;
    std::optional<Selection> best;
    for (const auto& [lat, i] : solo) {
      std::vector<std::size_t> trial = chosen;
      trial.insert(std::lower_bound(trial.begin(), trial.end(), i), i);
      auto s = allocate_bandwidth(profiles, trial, total_bandwidth, upload_bits, local_flops,
                                  options.noise_density);
      if (s && s->latency <= options.deadline) {
        chosen = std::move(trial);
        best = std::move(s);
      }
    }
    return best;
  }

  // Larger subsets always win, so scan sizes from n down and stop at the
  // first size that has a subset meeting the deadline.
  std::optional<Selection> best;
  for (std::size_t size = n; size >= 1 && !best; --size) {
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != size) continue;
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) subset.push_back(i);
      auto s = allocate_bandwidth(profiles, subset, total_bandwidth, upload_bits, local_flops,
                                  options.noise_density);
      if (!s || !(s->latency <= options.deadline)) continue;
      if (!best || better(*s, *best, profiles)) best = std::move(s);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

double upload_bits_for(const FedFtConfig& config, std::size_t rank) {
  return config.bits_per_param * static_cast<double>(rank * (config.rows + config.cols));
}

double local_flops_for(const FedFtConfig& config, std::size_t rank, std::size_t samples) {
  const double params = static_cast<double>(config.rows * config.cols +
                                            rank * (config.rows + config.cols));
  return config.flops_per_sample_param * static_cast<double>(samples) * params;
}

FedFtState make_synthetic_fedft(const FedFtConfig& config, std::span<const DeviceProfile> profiles,
                                std::uint64_t seed) {
  if (profiles.empty()) throw InputError("fedft: no devices");
  const std::size_t d = config.rows;
  const std::size_t k = config.cols;
  if (config.true_rank < 1 || config.true_rank > std::min(d, k))
    throw RankError("fedft: true rank outside [1, min(d,k)]");

  CounterRng rng(seed, 1);
  auto gaussian = [&rng](std::size_t r, std::size_t c, double sd) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal(0.0, sd);
    return Matrix(r, c, std::move(v));
  };
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));
  Matrix w0 = gaussian(d, k, inv_sqrt_k);
  const Matrix a_true = gaussian(d, config.true_rank, 1.0);
  const Matrix b_true = gaussian(config.true_rank, k, inv_sqrt_k);
  const Matrix w_true = add(w0, matmul(a_true, b_true));

  std::size_t r_max = 0;
  for (const auto& p : profiles) {
    p.validate();
    if (p.local_rank > std::min(d, k))
      throw RankError("device '" + p.id + "' rank exceeds min(d,k)");
    r_max = std::max(r_max, p.local_rank);
  }

  FedFtState state{0, FrozenBase(std::move(w0)), {}, {}, {}};
  state.global = LoraAdapter(gaussian(d, r_max, config.init_scale), Matrix(r_max, k));
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    state.local.push_back(truncate(state.global, profiles[i].local_rank));
    CounterRng drng(seed, 100 + i);
    RegressionData data;
    for (std::size_t s = 0; s < config.samples_per_device; ++s) {
      RegressionSample sample;
      sample.x.resize(k);
      for (double& x : sample.x) x = drng.normal();
      sample.y = matvec(w_true, sample.x);
      for (double& y : sample.y) y += drng.normal(0.0, config.noise_std);
      data.push_back(std::move(sample));
    }
    state.data.push_back(std::move(data));
  }
  return state;
}

double global_loss(const FedFtState& state) {
  RegressionData all;
  for (const auto& d : state.data) all.insert(all.end(), d.begin(), d.end());
  return lora_loss(state.base, state.global, all);
}

FedFtRoundResult fedft_round(const FedFtState& state, std::span<const DeviceProfile> profiles,
                             double total_bandwidth, const FedFtConfig& config) {
  const std::size_t n = profiles.size();
  if (state.local.size() != n || state.data.size() != n)
    throw InputError("fedft_round: state and profile counts differ");

  std::vector<double> bits(n);
  std::vector<double> flops(n);
  for (std::size_t i = 0; i < n; ++i) {
    bits[i] = upload_bits_for(config, state.local[i].rank());
    flops[i] = local_flops_for(config, state.local[i].rank(), state.data[i].size());
  }
  SelectionOptions opts;
  opts.noise_density = config.noise_density;
  opts.deadline = config.deadline;
  opts.greedy_fallback = n > kMaxExhaustiveDevices;
  const auto sel = select_devices_and_bandwidth(profiles, total_bandwidth, bits, flops, opts);
  if (!sel) throw InfeasibleError("fedft_round: no device subset meets the deadline");

  FedFtRoundResult out{state, {}};
  FedFtState& next = out.state;

  // Local steps; aggregation consumes them in ascending device order.
  std::vector<LoraAdapter> uploads;
  std::vector<double> weights;
  double total_samples = 0.0;
  for (std::size_t i : sel->selected) total_samples += static_cast<double>(state.data[i].size());
  for (std::size_t i : sel->selected) {
    uploads.push_back(lora_sgd_step(state.base, state.local[i], state.data[i], config.lr));
    weights.push_back(static_cast<double>(state.data[i].size()) / total_samples);
  }
  next.global = aggregate_hetero(uploads, weights);

  // Unicast downlink: every device gets the global truncated to its own rank.
  double downlink = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    next.local[i] = truncate(next.global, profiles[i].local_rank);
  }
  for (std::size_t j = 0; j < sel->selected.size(); ++j) {
    const std::size_t i = sel->selected[j];
    const DeviceProfile& p = profiles[i];
    const double rate =
        shannon_rate(sel->allocation.bandwidth[j], p.channel_gain, p.tx_power, config.noise_density);
    downlink = std::max(downlink, comm_latency(upload_bits_for(config, next.local[i].rank()), rate));
  }
  next.round = state.round + 1;

  FedFtRoundRecord& rec = out.record;
  rec.round = next.round;
  rec.global_loss = global_loss(next);
  rec.round_latency = sel->latency + downlink;
  for (std::size_t i : sel->selected) rec.selected_ids.push_back(profiles[i].id);
  rec.bandwidth = sel->allocation.bandwidth;
  return out;
}

}  // namespace edgelam
