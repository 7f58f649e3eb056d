#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace edgelam {

inline constexpr std::size_t kMaxCaseStudyDevices = 10;

/// Quadratic-in-tokens memory and compute model of a CoT chain split across
/// devices that each hold at most `max_tokens` tokens.
struct TokenBudgetModel {
  double total_tokens = 512;    // N
  double alpha_mem = 1.0;       // bytes / token^2
  double beta_comp = 1.0;       // FLOPs / token^2
  double compute_rate = 1.0;    // FLOP/s
  double gamma_handoff = 0.0;   // s per inter-device handoff
  double base_mem = 0.0;        // bytes per device

  /// Throws DomainError unless every field is usable.
  void validate() const;
};

struct BudgetRow {
  double budget = 0.0;  // T
  std::size_t device_count = 0;
  std::size_t handoffs = 0;
  double total_memory = 0.0;
  double total_latency = 0.0;
  double monolithic_memory = 0.0;
  double monolithic_latency = 0.0;
  double memory_reduction = 0.0;   // 1 - total / monolithic
  double latency_reduction = 0.0;
  /// total_memory / monolithic_memory + total_latency / monolithic_latency
  double combined_cost = 0.0;
};

BudgetRow casestudy_row(const TokenBudgetModel& model, double budget);

/// One row per budget. Throws DomainError if a budget needs more than
/// kMaxCaseStudyDevices devices or exceeds the chain length.
std::vector<BudgetRow> casestudy_sweep(const TokenBudgetModel& model,
                                       std::span<const double> budgets);

struct CalibrationGrid {
  double n_min = 256;
  double n_max = 2048;
  double n_step = 16;
  /// Log grids, relative to the monolithic latency / memory at each N.
  std::size_t log_points = 160;
  double rel_min = 1e-4;
  double rel_max = 1.0;
  double target_budget = 128;
  std::vector<double> compare_budgets = {64, 128, 256};
  /// Squared errors below this floor count as equal; among those the
  /// smallest N wins, then the smaller exact error.
  double error_floor = 4e-4;
  double max_residual = 0.02;
};

struct CalibrationResult {
  bool ok = false;
  TokenBudgetModel model;
  double memory_reduction = 0.0;
  double latency_reduction = 0.0;
  double residual_memory = 0.0;   // |achieved - target|
  double residual_latency = 0.0;
  double squared_error = 0.0;
  std::size_t n_index = 0;        // position of N on the grid
  std::size_t candidates = 0;     // grid points passing the optimality check
};

/// Grid search over N, gamma_handoff and base_mem (alpha, beta and the
/// compute rate stay at the template's values) for the point that hits the
/// two reductions at the target budget while that budget has the lowest
/// combined cost among the compared budgets.
CalibrationResult calibrate_casestudy(double memory_target, double latency_target,
                                      const TokenBudgetModel& base = {},
                                      const CalibrationGrid& grid = {});

}  // namespace edgelam
