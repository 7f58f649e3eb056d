#include "edgelam/unlearn.hpp"

#include <algorithm>
#include <cmath>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

namespace edgelam {

RetainedSubspace retained_subspace(const std::vector<Vector>& retained_gradients, double tol) {
  return RetainedSubspace{gram_schmidt(retained_gradients, tol)};
}

Vector orthogonal_project(std::span<const double> g, const RetainedSubspace& subspace) {
  Vector out(g.begin(), g.end());
  for (const Vector& u : subspace.basis) {
    if (u.size() != g.size()) throw ShapeError("orthogonal_project: dimension mismatch");
    const double c = dot(u, g);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * u[i];
  }
  return out;
}

double bounded_cross_entropy(const ProbVector& p, std::size_t label, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("bounded_cross_entropy: delta outside (0,1]");
  if (label >= p.size()) throw InputError("bounded_cross_entropy: label out of range");
  return -std::log((p[label] + delta) / (1.0 + delta));
}

double bounded_cross_entropy_dp(double p_label, double delta) {
  return -1.0 / (p_label + delta);
}

Vector add_dp_noise(std::span<const double> g, double clip_norm, double sigma,
                    std::uint64_t rng_seed) {
  if (!(clip_norm > 0.0)) throw DomainError("add_dp_noise: clip norm must be > 0");
  if (!(sigma >= 0.0)) throw DomainError("add_dp_noise: sigma must be >= 0");
  Vector out(g.begin(), g.end());
  const double n = norm(g);
  if (n > clip_norm) {
    const double s = clip_norm / n;
    for (double& x : out) x *= s;
  }
  if (sigma > 0.0) {
    CounterRng rng(rng_seed, 0);
    for (double& x : out) x += rng.normal(0.0, sigma * clip_norm);
  }
  return out;
}

// ---------------------------------------------------------------------------

double classifier_loss(const Matrix& weights, const LabeledData& data, double delta) {
  if (data.empty()) return 0.0;
  double s = 0.0;
  for (const auto& sample : data)
    s += bounded_cross_entropy(softmax(matvec(weights, sample.x)), sample.label, delta);
  return s / static_cast<double>(data.size());
}

Matrix classifier_gradient(const Matrix& weights, const LabeledData& data, double delta) {
  Matrix g(weights.rows(), weights.cols());
  if (data.empty()) return g;
  const double c = 1.0 / static_cast<double>(data.size());
  for (const auto& sample : data) {
    const ProbVector p = softmax(matvec(weights, sample.x));
    if (sample.label >= p.size()) throw InputError("classifier label out of range");
    const double py = p[sample.label];
    // dL/dz_j = dL/dp_y * p_y * (1[j == y] - p_j)
    const double outer = bounded_cross_entropy_dp(py, delta) * py;
    for (std::size_t j = 0; j < weights.rows(); ++j) {
      const double dz = c * outer * ((j == sample.label ? 1.0 : 0.0) - p[j]);
      for (std::size_t f = 0; f < weights.cols(); ++f) g(j, f) += dz * sample.x[f];
    }
  }
  return g;
}

Vector flatten(const Matrix& m) { return Vector(m.data().begin(), m.data().end()); }

Matrix unflatten(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(v.begin(), v.end()));
}

void UnlearnRequest::validate(std::size_t participant_count) const {
  if (opt_out.empty()) throw InputError("unlearn request: empty opt-out set");
  for (std::size_t id : opt_out) {
    if (id >= participant_count)
      throw InputError("unlearn request: device " + std::to_string(id) + " is not a participant");
    if (!forget_batches.contains(id))
      throw InputError("unlearn request: no forget batch for device " + std::to_string(id));
  }
}

double pooled_loss(const Matrix& weights, const std::vector<LabeledData>& per_device,
                   std::span<const std::size_t> devices, double delta) {
  LabeledData all;
  for (std::size_t i : devices) all.insert(all.end(), per_device[i].begin(), per_device[i].end());
  return classifier_loss(weights, all, delta);
}

std::vector<std::size_t> retained_devices(const UnlearnState& state,
                                          const UnlearnRequest& request) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < state.data.size(); ++i)
    if (!state.excluded.contains(i) && !request.opt_out.contains(i)) out.push_back(i);
  return out;
}

UnlearnState federated_descent_round(const UnlearnState& state,
                                     std::span<const std::size_t> participants, double lr,
                                     double delta) {
  UnlearnState next = state;
  if (!participants.empty()) {
    Matrix mean(state.global.rows(), state.global.cols());
    const double w = 1.0 / static_cast<double>(participants.size());
    for (std::size_t i : participants)
      mean = axpy(mean, w, classifier_gradient(state.global, state.data[i], delta));
    next.global = axpy(state.global, -lr, mean);
    for (std::size_t i : participants) next.personal[i] = next.global;
  }
  next.round = state.round + 1;
  return next;
}

UnlearnRoundResult unlearning_round(const UnlearnState& state, const UnlearnRequest& request,
                                    double lr, double delta, const std::optional<DpConfig>& dp) {
  request.validate(state.data.size());
  const std::size_t rows = state.global.rows();
  const std::size_t cols = state.global.cols();
  const std::vector<std::size_t> retained = retained_devices(state, request);

  UnlearnRoundResult out{state, {}};
  UnlearnState& next = out.state;

  std::vector<Matrix> descent;
  std::vector<Vector> descent_flat;
  for (std::size_t i : retained) {
    descent.push_back(classifier_gradient(state.global, state.data[i], delta));
    descent_flat.push_back(flatten(descent.back()));
  }
  const RetainedSubspace subspace = retained_subspace(descent_flat);

  Matrix update(rows, cols);
  if (!retained.empty()) {
    const double w = 1.0 / static_cast<double>(retained.size());
    for (std::size_t j = 0; j < retained.size(); ++j) {
      update = axpy(update, -lr * w, descent[j]);
      next.personal[retained[j]] = axpy(state.global, -lr, descent[j]);
    }
  }

  double residual = 0.0;
  double ortho = 0.0;
  const double w_out = 1.0 / static_cast<double>(request.opt_out.size());
  for (std::size_t o : request.opt_out) {
    const Vector ascent =
        flatten(classifier_gradient(state.global, request.forget_batches.at(o), delta));
    Vector projected = orthogonal_project(ascent, subspace);
    residual = std::max(residual, norm(projected));
    for (const Vector& u : subspace.basis) ortho = std::max(ortho, std::abs(dot(projected, u)));
    if (dp) {
      projected = add_dp_noise(projected, dp->clip_norm, dp->sigma,
                               derive_seed(dp->seed, state.round, o));
    }
    const Matrix step = unflatten(projected, rows, cols);
    next.personal[o] = axpy(state.global, lr, step);
    update = axpy(update, lr * w_out, step);
  }

  next.global = add(state.global, update);
  next.excluded.insert(request.opt_out.begin(), request.opt_out.end());
  next.round = state.round + 1;

  std::vector<LabeledData> forget;
  for (const auto& [id, batch] : request.forget_batches) forget.push_back(batch);
  std::vector<std::size_t> forget_idx(forget.size());
  for (std::size_t i = 0; i < forget.size(); ++i) forget_idx[i] = i;

  UnlearnRoundRecord& rec = out.record;
  rec.round = next.round;
  rec.forget_loss = pooled_loss(next.global, forget, forget_idx, delta);
  rec.retained_loss = pooled_loss(next.global, next.data, retained, delta);
  rec.projection_residual_norm = residual;
  rec.orthogonality_error = ortho;
  rec.sigma = dp ? dp->sigma : 0.0;
  return out;
}

UnlearnState make_synthetic_unlearn(const UnlearnTaskConfig& config, std::uint64_t seed) {
  if (config.classes < 2) throw InputError("unlearn task: need at least two classes");
  if (config.features < 3) throw InputError("unlearn task: need at least three features");
  const std::size_t f = config.features;
  // First half of the features (bias excluded) is shared, the rest private.
  const std::size_t usable = f - 1;
  const std::size_t shared = std::max<std::size_t>(1, usable / 2);

  CounterRng rng(seed, 7);
  auto random_dir = [&](std::size_t lo, std::size_t hi) {
    Vector w(f, 0.0);
    for (std::size_t i = lo; i < hi; ++i) w[i] = rng.normal();
    return w;
  };
  std::vector<Vector> shared_centers;
  std::vector<Vector> private_centers;
  for (std::size_t c = 0; c < config.classes; ++c) {
    shared_centers.push_back(random_dir(0, shared));
    private_centers.push_back(random_dir(shared, usable));
  }

  UnlearnState state;
  state.global = Matrix(config.classes, f);
  for (std::size_t d = 0; d < config.devices; ++d) {
    state.ids.push_back("d" + std::to_string(d));
    state.personal.push_back(state.global);
    const bool distinct = config.distinct_devices.contains(d);
    CounterRng drng(seed, 1000 + d);
    LabeledData data;
    for (std::size_t s = 0; s < config.samples_per_device; ++s) {
      LabeledSample sample;
      sample.label = drng.below(config.classes);
      sample.x.assign(f, 0.0);
      const Vector& center = distinct ? private_centers[sample.label] : shared_centers[sample.label];
      const std::size_t lo = distinct ? shared : 0;
      const std::size_t hi = distinct ? usable : shared;
      for (std::size_t i = lo; i < hi; ++i) sample.x[i] = center[i] + 0.5 * drng.normal();
      if (distinct) {
        for (std::size_t i = 0; i < shared; ++i) sample.x[i] = config.shared_leak * drng.normal();
      }
      sample.x[f - 1] = 1.0;
      data.push_back(std::move(sample));
    }
    state.data.push_back(std::move(data));
  }
  return state;
}

}  // namespace edgelam
