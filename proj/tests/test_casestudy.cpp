#include <doctest.h>

#include <cmath>

#include "edgelam/casestudy.hpp"
#include "edgelam/error.hpp"

using namespace edgelam;

TEST_CASE("single-device split equals the monolithic model plus the base term") {
  TokenBudgetModel m;
  m.total_tokens = 300;
  m.base_mem = 7.0;
  m.gamma_handoff = 2.0;
  const BudgetRow r = casestudy_row(m, 300);
  CHECK(r.device_count == 1);
  CHECK(r.handoffs == 0);
  CHECK(r.total_memory == 300.0 * 300.0 + 7.0);
  CHECK(r.total_latency == 300.0 * 300.0);
  CHECK(r.memory_reduction == 0.0);
  CHECK(r.latency_reduction == 0.0);
}

TEST_CASE("halving the budget halves total memory") {
  TokenBudgetModel m;
  m.total_tokens = 512;
  const double budgets[] = {256, 128, 64};
  double prev = casestudy_row(m, 512).total_memory;
  for (double t : budgets) {
    const double cur = casestudy_row(m, t).total_memory;
    CHECK(cur == prev / 2);
    prev = cur;
  }
}

TEST_CASE("memory grows with the budget and never exceeds the monolithic value") {
  // Checked on budgets that split the chain evenly, where total memory is N*T.
  TokenBudgetModel m;
  m.total_tokens = 720;
  double prev = 0.0;
  for (double t = 72; t < 720; t += 1) {
    if (std::fmod(720.0, t) != 0.0) continue;
    const BudgetRow r = casestudy_row(m, t);
    CHECK(r.total_memory <= r.monolithic_memory);
    CHECK(r.total_memory > prev);
    prev = r.total_memory;
  }
}

TEST_CASE("rounding the device count up can overshoot the monolithic memory") {
  // Every device is charged a full T^2, including the last partial one.
  TokenBudgetModel m;
  m.total_tokens = 600;
  const BudgetRow r = casestudy_row(m, 425);
  CHECK(r.device_count == 2);
  CHECK(r.total_memory == 2 * 425.0 * 425.0);
  CHECK(r.total_memory > r.monolithic_memory);
}

TEST_CASE("reported reductions are consistent with the totals") {
  TokenBudgetModel m;
  m.total_tokens = 1000;
  m.gamma_handoff = 1234.5;
  m.base_mem = 4321.0;
  const std::vector<double> budgets{128, 200, 333, 1000};
  for (const BudgetRow& r : casestudy_sweep(m, budgets)) {
    CHECK(std::abs(r.memory_reduction - (1.0 - r.total_memory / r.monolithic_memory)) <= 1e-12);
    CHECK(std::abs(r.latency_reduction - (1.0 - r.total_latency / r.monolithic_latency)) <= 1e-12);
    CHECK(r.combined_cost == doctest::Approx(2.0 - r.memory_reduction - r.latency_reduction));
  }
}

TEST_CASE("device limit and domain errors") {
  TokenBudgetModel m;
  m.total_tokens = 2048;
  CHECK_THROWS_AS(casestudy_row(m, 128), DomainError);  // 16 devices
  CHECK_NOTHROW(casestudy_row(m, 256));
  CHECK_THROWS_AS(casestudy_row(m, 4096), DomainError);
  CHECK_THROWS_AS(casestudy_row(m, 0), DomainError);
  m.alpha_mem = -1;
  CHECK_THROWS_AS(m.validate(), DomainError);
}

TEST_CASE("calibration reproduces the published reductions") {
  const CalibrationResult r = calibrate_casestudy(0.708, 0.596);
  REQUIRE(r.ok);
  CHECK(std::abs(r.memory_reduction - 0.708) <= 0.10);
  CHECK(std::abs(r.latency_reduction - 0.596) <= 0.10);
  const std::vector<double> budgets{64, 128, 256};
  const auto rows = casestudy_sweep(r.model, budgets);
  for (const auto& row : rows) CHECK(row.device_count <= kMaxCaseStudyDevices);
  CHECK(rows[1].combined_cost < rows[0].combined_cost);
  CHECK(rows[1].combined_cost < rows[2].combined_cost);
  CHECK(rows[1].memory_reduction == r.memory_reduction);
}

TEST_CASE("calibration reaches a fixed point on its own forward run") {
  const CalibrationResult first = calibrate_casestudy(0.708, 0.596);
  REQUIRE(first.ok);
  const BudgetRow fwd = casestudy_row(first.model, 128);
  const CalibrationResult again = calibrate_casestudy(fwd.memory_reduction, fwd.latency_reduction);
  REQUIRE(again.ok);
  CHECK(again.squared_error == 0.0);
  CHECK(again.residual_memory == 0.0);
  CHECK(again.residual_latency == 0.0);
}

TEST_CASE("calibration is stable under small target perturbations") {
  const CalibrationResult base = calibrate_casestudy(0.708, 0.596);
  REQUIRE(base.ok);
  const double shifts[][2] = {{0.01, 0.01}, {0.01, 0.0}, {0.0, 0.01}};
  for (const auto& s : shifts) {
    const CalibrationResult moved = calibrate_casestudy(0.708 + s[0], 0.596 + s[1]);
    REQUIRE(moved.ok);
    const long diff = static_cast<long>(moved.n_index) - static_cast<long>(base.n_index);
    CHECK(std::abs(diff) <= 2);
  }
}

TEST_CASE("unreachable targets report a calibration failure") {
  const CalibrationResult r = calibrate_casestudy(0.999, 0.999);
  CHECK_FALSE(r.ok);
}
