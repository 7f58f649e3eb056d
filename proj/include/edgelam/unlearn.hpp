#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "edgelam/numerics.hpp"

namespace edgelam {

/// Orthonormal basis of the span of retained devices' gradients.
struct RetainedSubspace {
  std::vector<Vector> basis;

  std::size_t dimension() const { return basis.size(); }
};

RetainedSubspace retained_subspace(const std::vector<Vector>& retained_gradients,
                                   double tol = 1e-8);

/// g minus its components along every basis vector.
Vector orthogonal_project(std::span<const double> g, const RetainedSubspace& subspace);

/// -ln((p_label + delta) / (1 + delta)); lies in [0, ln((1 + delta) / delta)].
double bounded_cross_entropy(const ProbVector& p, std::size_t label, double delta);

/// Derivative of the bounded loss with respect to p_label.
double bounded_cross_entropy_dp(double p_label, double delta);

/// Clip to norm <= clip_norm, then add N(0, (sigma*clip_norm)^2) per coordinate.
Vector add_dp_noise(std::span<const double> g, double clip_norm, double sigma,
                    std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Federated softmax-linear classifier used by the unlearning rounds.

struct LabeledSample {
  Vector x;
  std::size_t label = 0;
};
using LabeledData = std::vector<LabeledSample>;

/// Mean bounded cross-entropy of softmax(weights * x).
double classifier_loss(const Matrix& weights, const LabeledData& data, double delta);

/// Gradient of classifier_loss with respect to the weights.
Matrix classifier_gradient(const Matrix& weights, const LabeledData& data, double delta);

Vector flatten(const Matrix& m);
Matrix unflatten(std::span<const double> v, std::size_t rows, std::size_t cols);

struct UnlearnState {
  std::size_t round = 0;
  std::vector<std::string> ids;
  Matrix global;                  // classes x features
  std::vector<Matrix> personal;   // last unicast model per device
  std::vector<LabeledData> data;  // local training data per device
  std::set<std::size_t> excluded; // devices that have opted out for good
};

struct UnlearnRequest {
  std::set<std::size_t> opt_out;
  std::map<std::size_t, LabeledData> forget_batches;

  /// Throws InputError unless the opt-out set is nonempty, names known
  /// devices, and has a forget batch for each of them.
  void validate(std::size_t participant_count) const;
};

struct DpConfig {
  double clip_norm = 1.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct UnlearnRoundRecord {
  std::size_t round = 0;
  double forget_loss = 0.0;
  double retained_loss = 0.0;
  double projection_residual_norm = 0.0;
  /// max |<projected update, u>| over basis vectors, measured before noise.
  double orthogonality_error = 0.0;
  double sigma = 0.0;
};

struct UnlearnRoundResult {
  UnlearnState state;
  UnlearnRoundRecord record;
};

/// Plain federated descent over the listed devices (pre-training and the
/// no-unlearning baseline).
UnlearnState federated_descent_round(const UnlearnState& state,
                                     std::span<const std::size_t> participants, double lr,
                                     double delta);

/// Retained devices take a descent step on the global model; opt-out devices
/// ascend their forget loss, projected away from the retained subspace and
/// optionally noised. Each device receives its own update.
UnlearnRoundResult unlearning_round(const UnlearnState& state, const UnlearnRequest& request,
                                    double lr, double delta,
                                    const std::optional<DpConfig>& dp = std::nullopt);

/// Loss of the global model over the given devices' local data.
double pooled_loss(const Matrix& weights, const std::vector<LabeledData>& per_device,
                   std::span<const std::size_t> devices, double delta);

std::vector<std::size_t> retained_devices(const UnlearnState& state, const UnlearnRequest& request);

struct UnlearnTaskConfig {
  std::size_t devices = 4;
  std::size_t features = 6;
  std::size_t classes = 2;
  std::size_t samples_per_device = 40;
  /// Device ids listed here draw from a distribution with its own private
  /// feature directions.
  std::set<std::size_t> distinct_devices = {3};
  double shared_leak = 0.2;
};

/// Seeded synthetic task; the global starts at zero.
UnlearnState make_synthetic_unlearn(const UnlearnTaskConfig& config, std::uint64_t seed);

}  // namespace edgelam
