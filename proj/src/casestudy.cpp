#include "edgelam/casestudy.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "edgelam/error.hpp"

namespace edgelam {

void TokenBudgetModel::validate() const {
  if (!(total_tokens > 0.0)) throw DomainError("token model: total_tokens must be > 0");
  if (!(alpha_mem > 0.0) || !(beta_comp > 0.0) || !(compute_rate > 0.0))
    throw DomainError("token model: alpha_mem, beta_comp and compute_rate must be > 0");
  if (!(gamma_handoff >= 0.0) || !(base_mem >= 0.0))
    throw DomainError("token model: gamma_handoff and base_mem must be >= 0");
}

BudgetRow casestudy_row(const TokenBudgetModel& m, double budget) {
  if (!(budget > 0.0)) throw DomainError("token budget must be > 0");
  if (budget > m.total_tokens) throw DomainError("token budget exceeds the chain length");
  const double count = std::ceil(m.total_tokens / budget);
  if (count > static_cast<double>(kMaxCaseStudyDevices)) {
    throw DomainError("token budget " + std::to_string(budget) + " needs " +
                      std::to_string(static_cast<long long>(count)) + " devices, limit is " +
                      std::to_string(kMaxCaseStudyDevices));
  }
  BudgetRow row;
  row.budget = budget;
  row.device_count = static_cast<std::size_t>(count);
  row.handoffs = row.device_count - 1;
  row.total_memory = count * (m.alpha_mem * budget * budget + m.base_mem);
  row.monolithic_memory = m.alpha_mem * m.total_tokens * m.total_tokens + m.base_mem;
  row.total_latency = count * (m.beta_comp * budget * budget / m.compute_rate + m.gamma_handoff) -
                      m.gamma_handoff;
  row.monolithic_latency = m.beta_comp * m.total_tokens * m.total_tokens / m.compute_rate;
  const double mem_ratio = row.total_memory / row.monolithic_memory;
  const double lat_ratio = row.total_latency / row.monolithic_latency;
  row.memory_reduction = 1.0 - mem_ratio;
  row.latency_reduction = 1.0 - lat_ratio;
  row.combined_cost = mem_ratio + lat_ratio;
  return row;
}

std::vector<BudgetRow> casestudy_sweep(const TokenBudgetModel& model,
                                       std::span<const double> budgets) {
  model.validate();
  if (budgets.empty()) throw InputError("casestudy_sweep: no budgets");
  std::vector<BudgetRow> rows;
  for (double t : budgets) rows.push_back(casestudy_row(model, t));
  return rows;
}

namespace {

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  const double step = points > 1 ? std::log(hi / lo) / static_cast<double>(points - 1) : 0.0;
  for (std::size_t i = 0; i < points; ++i) g[i] = lo * std::exp(step * static_cast<double>(i));
  return g;
}

bool budgets_fit(double n, std::span<const double> budgets) {
  for (double t : budgets) {
    if (t > n || std::ceil(n / t) > static_cast<double>(kMaxCaseStudyDevices)) return false;
  }
  return true;
}

}  // namespace

CalibrationResult calibrate_casestudy(double memory_target, double latency_target,
                                      const TokenBudgetModel& base, const CalibrationGrid& grid) {
  if (!(memory_target > 0.0 && memory_target < 1.0) ||
      !(latency_target > 0.0 && latency_target < 1.0))
    throw DomainError("calibrate_casestudy: targets must lie in (0,1)");
  base.validate();

  const std::vector<double> rel = log_grid(grid.rel_min, grid.rel_max, grid.log_points);
  CalibrationResult best;
  // Key: (floored squared error, N index, squared error, gamma index, base index).
  std::tuple<double, std::size_t, double, std::size_t, std::size_t> best_key{
      std::numeric_limits<double>::infinity(), 0, 0.0, 0, 0};
  bool found = false;

  std::size_t n_index = 0;
  for (double n = grid.n_min; n <= grid.n_max + 1e-9; n += grid.n_step, ++n_index) {
    if (!budgets_fit(n, grid.compare_budgets) || !budgets_fit(n, {&grid.target_budget, 1}))
      continue;
    TokenBudgetModel m = base;
    m.total_tokens = n;
    const double mono_lat = m.beta_comp * n * n / m.compute_rate;
    const double mono_mem = m.alpha_mem * n * n;
    for (std::size_t gi = 0; gi < rel.size(); ++gi) {
      m.gamma_handoff = rel[gi] * mono_lat;
      for (std::size_t bi = 0; bi < rel.size(); ++bi) {
        m.base_mem = rel[bi] * mono_mem;
        const BudgetRow target = casestudy_row(m, grid.target_budget);
        bool optimal = true;
        for (double t : grid.compare_budgets) {
          if (t == grid.target_budget) continue;
          if (!(casestudy_row(m, t).combined_cost > target.combined_cost)) {
            optimal = false;
            break;
          }
        }
        if (!optimal) continue;
        ++best.candidates;
        const double em = target.memory_reduction - memory_target;
        const double el = target.latency_reduction - latency_target;
        const double err = em * em + el * el;
        const std::tuple key{std::max(err, grid.error_floor), n_index, err, gi, bi};
        if (!found || key < best_key) {
          found = true;
          best_key = key;
          const std::size_t candidates = best.candidates;
          best = CalibrationResult{};
          best.candidates = candidates;
          best.model = m;
          best.memory_reduction = target.memory_reduction;
          best.latency_reduction = target.latency_reduction;
          best.residual_memory = std::abs(em);
          best.residual_latency = std::abs(el);
          best.squared_error = err;
          best.n_index = n_index;
        }
      }
    }
  }
  best.ok = found && best.residual_memory <= grid.max_residual &&
            best.residual_latency <= grid.max_residual;
  return best;
}

}  // namespace edgelam
