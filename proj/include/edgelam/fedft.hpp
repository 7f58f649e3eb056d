#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgelam/netsim.hpp"
#include "edgelam/numerics.hpp"

namespace edgelam {

/// Low-rank adapter: the effective update is a (d x r) times b (r x k).
struct LoraAdapter {
  Matrix a;
  Matrix b;

  LoraAdapter() = default;
  /// Throws ShapeError / RankError when the factors do not form a valid adapter.
  LoraAdapter(Matrix a_factor, Matrix b_factor);

  std::size_t rows() const { return a.rows(); }
  std::size_t cols() const { return b.cols(); }
  std::size_t rank() const { return a.cols(); }
  std::size_t parameter_count() const { return a.size() + b.size(); }
  Matrix delta() const { return matmul(a, b); }

  bool operator==(const LoraAdapter&) const = default;
};

/// Pretrained weights W0; never modified once constructed.
class FrozenBase {
 public:
  explicit FrozenBase(Matrix weights) : weights_(std::move(weights)) {}
  const Matrix& weights() const { return weights_; }

 private:
  Matrix weights_;
};

struct RegressionSample {
  Vector x;  // length k
  Vector y;  // length d
};
using RegressionData = std::vector<RegressionSample>;

LoraAdapter zero_pad(const LoraAdapter& adapter, std::size_t target_rank);
LoraAdapter truncate(const LoraAdapter& adapter, std::size_t target_rank);

/// Pads every adapter to the largest rank, then averages the A factors and
/// the B factors separately with the given weights.
LoraAdapter aggregate_hetero(std::span<const LoraAdapter> adapters, std::span<const double> weights);

/// Mean over the batch of ||(W0 + AB)x - y||^2.
double lora_loss(const FrozenBase& base, const LoraAdapter& adapter, const RegressionData& batch);

struct LoraGradient {
  Matrix da;
  Matrix db;
};
LoraGradient lora_gradient(const FrozenBase& base, const LoraAdapter& adapter,
                           const RegressionData& batch);

/// One gradient step on A and B; W0 is untouched.
LoraAdapter lora_sgd_step(const FrozenBase& base, const LoraAdapter& adapter,
                          const RegressionData& batch, double lr);

// ---------------------------------------------------------------------------
// Knowledge distillation through a softmax-linear shared module.

/// Class logits = weights * feature.
struct SharedModule {
  Matrix weights;  // classes x features
};

struct TeacherExample {
  Vector feature;
  ProbVector target;
};

/// sum_i p_i ln(p_i / max(q_i, 1e-12)), with 0 ln 0 = 0.
double kl_divergence(const ProbVector& p, const ProbVector& q);

ProbVector predict(const SharedModule& module, std::span<const double> feature);

/// Mean KL(teacher || softmax(weights * feature)) over the examples.
double distill_loss(const SharedModule& student, std::span<const TeacherExample> examples);
Matrix distill_gradient(const SharedModule& student, std::span<const TeacherExample> examples);
SharedModule distill_step(const SharedModule& student, std::span<const TeacherExample> examples,
                          double lr);

struct MutualDistillResult {
  SharedModule shared;
  SharedModule local;
};

/// Server pass: the shared module learns from the local module's predictions.
/// Device pass: the local module learns from the updated shared module.
MutualDistillResult mutual_distill(const SharedModule& shared, const SharedModule& local,
                                   std::span<const Vector> features, double lr);

// ---------------------------------------------------------------------------
// Device selection and bandwidth allocation.

struct SelectionOptions {
  double noise_density = 1e-9;
  double deadline = std::numeric_limits<double>::infinity();
  /// Permit the greedy path when there are more than kMaxExhaustiveDevices devices.
  bool greedy_fallback = false;
};

inline constexpr std::size_t kMaxExhaustiveDevices = 12;

struct Selection {
  std::vector<std::size_t> selected;  // indices into the profile list, ascending
  ChannelAllocation allocation;       // bandwidth[j] belongs to selected[j]
  double latency = 0.0;               // max over selected of comp + upload
};

/// Minimal max-latency allocation for one fixed device subset, by bisection
/// on the target latency. Leftover band is spread proportionally afterwards.
/// nullopt when the subset cannot finish in finite time.
std::optional<Selection> allocate_bandwidth(std::span<const DeviceProfile> profiles,
                                            std::span<const std::size_t> subset,
                                            double total_bandwidth,
                                            std::span<const double> upload_bits,
                                            std::span<const double> local_flops,
                                            double noise_density);

/// Exhaustive search over nonempty subsets: most devices within the deadline,
/// then lowest latency, then lexicographically smallest id list.
/// nullopt when no subset meets the deadline.
std::optional<Selection> select_devices_and_bandwidth(std::span<const DeviceProfile> profiles,
                                                      double total_bandwidth,
                                                      std::span<const double> upload_bits,
                                                      std::span<const double> local_flops,
                                                      const SelectionOptions& options = {});

// ---------------------------------------------------------------------------
// Federated rounds on a synthetic regression task.

struct FedFtConfig {
  std::size_t rows = 8;          // d
  std::size_t cols = 6;          // k
  std::size_t true_rank = 2;
  std::size_t samples_per_device = 32;
  double lr = 0.05;
  double noise_std = 0.01;
  double init_scale = 0.1;
  double bits_per_param = 32.0;
  double flops_per_sample_param = 6.0;
  double noise_density = 1e-9;
  double deadline = std::numeric_limits<double>::infinity();
};

struct FedFtState {
  std::size_t round = 0;
  FrozenBase base{Matrix()};
  LoraAdapter global;
  std::vector<LoraAdapter> local;
  std::vector<RegressionData> data;
};

struct FedFtRoundRecord {
  std::size_t round = 0;
  double global_loss = 0.0;
  double round_latency = 0.0;
  std::vector<std::string> selected_ids;
  std::vector<double> bandwidth;
};

struct FedFtRoundResult {
  FedFtState state;
  FedFtRoundRecord record;
};

/// Ground truth y = (W0 + A*B*)x + noise; global adapter starts with random A
/// and zero B, devices start from its truncation to their own rank.
FedFtState make_synthetic_fedft(const FedFtConfig& config, std::span<const DeviceProfile> profiles,
                                std::uint64_t seed);

/// Loss of the full-rank global adapter over the union of device datasets.
double global_loss(const FedFtState& state);

double upload_bits_for(const FedFtConfig& config, std::size_t rank);
double local_flops_for(const FedFtConfig& config, std::size_t rank, std::size_t samples);

/// Select, train locally, upload, aggregate, and unicast truncated globals.
/// Throws InfeasibleError when no device subset meets the deadline.
FedFtRoundResult fedft_round(const FedFtState& state, std::span<const DeviceProfile> profiles,
                             double total_bandwidth, const FedFtConfig& config);

}  // namespace edgelam
