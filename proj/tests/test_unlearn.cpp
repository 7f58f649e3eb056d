#include <doctest.h>

#include <cmath>

#include "edgelam/error.hpp"
#include "edgelam/unlearn.hpp"
#include "support.hpp"

using namespace edgelam;
using edgelam::testing::max_abs_diff;
using edgelam::testing::random_matrix;
using edgelam::testing::random_vector;

namespace {

// Projector onto span(vs) via the normal equations, solved by elimination.
std::vector<Vector> lsq_project_rows(const std::vector<Vector>& vs, const std::vector<Vector>& gs) {
  const std::size_t m = vs.size();
  std::vector<Vector> out;
  for (const Vector& g : gs) {
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += vs[i][k] * vs[j][k];
        a[i][j] = s;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) s += vs[i][k] * g[k];
      a[i][m] = s;
    }
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t r = 0; r < m; ++r) {
        if (r == c) continue;
        const double f = a[r][c] / a[c][c];
        for (std::size_t k = c; k <= m; ++k) a[r][k] -= f * a[c][k];
      }
    Vector p(g.size(), 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < g.size(); ++k) p[k] += a[i][m] / a[i][i] * vs[i][k];
    out.push_back(p);
  }
  return out;
}

double max_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

UnlearnState tiny_state(const LabeledData& shared, const LabeledData& forget) {
  UnlearnState s;
  s.ids = {"r", "o"};
  s.global = Matrix::from_rows({{0.1, -0.2, 0.05}, {-0.3, 0.2, 0.1}});
  s.personal = {s.global, s.global};
  s.data = {shared, forget};
  return s;
}

}  // namespace

TEST_CASE("retained_subspace examples") {
  const auto one = retained_subspace({{3, 0, 4}});
  REQUIRE(one.dimension() == 1);
  CHECK(max_diff(one.basis[0], {0.6, 0.0, 0.8}) <= 1e-15);

  CHECK(retained_subspace({{1, 2, 3}, {2, 4, 6}}).dimension() == 1);
  CHECK(retained_subspace({}).dimension() == 0);
}

TEST_CASE("retained_subspace projector matches least squares") {
  CounterRng rng(41);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vector> grads;
    for (int i = 0; i < 3; ++i) grads.push_back(random_vector(rng, 8));
    const RetainedSubspace s = retained_subspace(grads);
    REQUIRE(s.dimension() == 3);
    std::vector<Vector> probes;
    for (int i = 0; i < 8; ++i) {
      Vector e(8, 0.0);
      e[i] = 1.0;
      probes.push_back(e);
    }
    const auto oracle = lsq_project_rows(grads, probes);
    for (std::size_t i = 0; i < 8; ++i) {
      const Vector residual = orthogonal_project(probes[i], s);
      Vector inside(8);
      for (std::size_t k = 0; k < 8; ++k) inside[k] = probes[i][k] - residual[k];
      CHECK(max_diff(inside, oracle[i]) <= 1e-9);
    }
  }
}

TEST_CASE("orthogonal_project examples") {
  CounterRng rng(42);
  const RetainedSubspace s = retained_subspace({random_vector(rng, 6), random_vector(rng, 6)});

  Vector in_span(6, 0.0);
  for (std::size_t k = 0; k < 6; ++k) in_span[k] = 2.0 * s.basis[0][k] - 0.5 * s.basis[1][k];
  CHECK(norm(orthogonal_project(in_span, s)) <= 1e-10);

  Vector g = random_vector(rng, 6);
  const Vector perp = orthogonal_project(g, s);
  CHECK(max_diff(orthogonal_project(perp, s), perp) <= 1e-12);

  // (I - U U^T) g with U written out explicitly.
  for (int t = 0; t < 20; ++t) {
    g = random_vector(rng, 6);
    Vector oracle = g;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double uut = 0.0;
        for (const auto& u : s.basis) uut += u[i] * u[j];
        oracle[i] -= uut * g[j];
      }
    CHECK(max_diff(orthogonal_project(g, s), oracle) <= 1e-10);
  }
  const Vector short_g{1.0};
  CHECK_THROWS_AS(orthogonal_project(short_g, s), ShapeError);
}

TEST_CASE("projection is idempotent and satisfies Pythagoras") {
  CounterRng rng(43);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + rng.below(8);
    std::vector<Vector> grads;
    for (std::size_t i = 0; i < 1 + rng.below(n - 1); ++i) grads.push_back(random_vector(rng, n));
    const RetainedSubspace s = retained_subspace(grads);
    const Vector g = random_vector(rng, n);
    const Vector p = orthogonal_project(g, s);
    CHECK(max_diff(orthogonal_project(p, s), p) <= 1e-10);
    Vector in(n);
    for (std::size_t k = 0; k < n; ++k) in[k] = g[k] - p[k];
    const double lhs = dot(g, g), rhs = dot(in, in) + dot(p, p);
    CHECK(std::abs(lhs - rhs) <= 1e-9 * lhs);
  }
}

TEST_CASE("bounded_cross_entropy examples") {
  CHECK(bounded_cross_entropy(ProbVector({1.0, 0.0}), 0, 0.1) == 0.0);
  CHECK(bounded_cross_entropy(ProbVector({1.0, 0.0}), 1, 0.01) ==
        doctest::Approx(std::log(101.0)).epsilon(1e-14));
  CHECK(std::abs(std::log(101.0) - 4.61512) < 1e-5);
  CHECK_THROWS_AS(bounded_cross_entropy(ProbVector({1.0, 0.0}), 0, 0.0), DomainError);
  CHECK_THROWS_AS(bounded_cross_entropy(ProbVector({1.0, 0.0}), 2, 0.1), InputError);
}

TEST_CASE("bounded_cross_entropy stays below its bound") {
  for (double delta : {1e-3, 0.01, 0.1, 1.0}) {
    const double bound = std::log((1.0 + delta) / delta);
    for (int i = 0; i <= 10000; ++i) {
      const double p = i / 10000.0;
      const double l = bounded_cross_entropy(ProbVector({p, 1.0 - p}), 0, delta);
      CHECK(l >= 0.0);
      CHECK(l <= bound);
    }
  }
}

TEST_CASE("bounded_cross_entropy derivatives match central differences") {
  CounterRng rng(44);
  const double h = 1e-5;
  for (int t = 0; t < 100; ++t) {
    const double delta = rng.uniform(0.01, 1.0);
    const double p = rng.uniform(0.05, 0.95);
    auto f = [&](double q) { return -std::log((q + delta) / (1.0 + delta)); };
    const double fd = (f(p + h) - f(p - h)) / (2 * h);
    CHECK(std::abs(bounded_cross_entropy_dp(p, delta) - fd) <= 1e-6 * std::abs(fd));
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + rng.below(3), f = 1 + rng.below(5);
    const Matrix w = random_matrix(rng, c, f);
    LabeledData data;
    for (std::size_t i = 0; i < 1 + rng.below(6); ++i) data.push_back({random_vector(rng, f), rng.below(c)});
    const double delta = rng.uniform(0.01, 1.0);
    const Matrix g = classifier_gradient(w, data, delta);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      Matrix wp = w, wm = w;
      wp.data()[i] += h;
      wm.data()[i] -= h;
      const double fd = (classifier_loss(wp, data, delta) - classifier_loss(wm, data, delta)) / (2 * h);
      diff += (fd - g.data()[i]) * (fd - g.data()[i]);
      scale += fd * fd;
    }
    CHECK(std::sqrt(diff) <= 1e-6 * std::max(std::sqrt(scale), 1e-12));
  }
}

TEST_CASE("add_dp_noise examples") {
  const Vector g{0.3, 0.4};
  CHECK(add_dp_noise(g, 1.0, 0.0, 1) == g);
  const Vector big{1.2, 1.6};
  const Vector clipped = add_dp_noise(big, 1.0, 0.0, 1);
  CHECK(max_diff(clipped, {0.6, 0.8}) <= 1e-15);

  const Vector zero(1000, 0.0);
  const Vector noisy = add_dp_noise(zero, 1.0, 1.0, 77);
  double mean = 0.0;
  for (double v : noisy) mean += v;
  mean /= 1000.0;
  double var = 0.0;
  for (double v : noisy) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 999.0);
  CHECK(sd >= 0.9);
  CHECK(sd <= 1.1);

  CHECK(add_dp_noise(big, 1.0, 0.7, 5) == add_dp_noise(big, 1.0, 0.7, 5));
  CHECK(add_dp_noise(big, 1.0, 0.7, 5) != add_dp_noise(big, 1.0, 0.7, 6));
  CHECK_THROWS_AS(add_dp_noise(big, 0.0, 0.7, 5), DomainError);
}

TEST_CASE("unlearning with no retained devices is plain ascent") {
  const LabeledData forget{{{1.0, 0.5, 1.0}, 0}, {{-0.5, 1.0, 1.0}, 1}};
  UnlearnState s;
  s.ids = {"o"};
  s.global = Matrix::from_rows({{0.1, -0.2, 0.05}, {-0.3, 0.2, 0.1}});
  s.personal = {s.global};
  s.data = {forget};
  UnlearnRequest req{{0}, {{0, forget}}};
  const double lr = 0.3, delta = 0.1;
  const auto r = unlearning_round(s, req, lr, delta);
  const Matrix oracle = axpy(s.global, lr, classifier_gradient(s.global, forget, delta));
  CHECK(max_abs_diff(r.state.global, oracle) <= 1e-15);
  CHECK(r.record.forget_loss > classifier_loss(s.global, forget, delta));
}

TEST_CASE("forget gradient parallel to the retained gradient cancels the unlearning step") {
  const LabeledData batch{{{1.0, 0.5, 1.0}, 0}, {{-0.5, 1.0, 1.0}, 1}};
  const UnlearnState s = tiny_state(batch, batch);
  UnlearnRequest req{{1}, {{1, batch}}};
  const double lr = 0.2, delta = 0.1;
  const auto r = unlearning_round(s, req, lr, delta);
  CHECK(r.record.projection_residual_norm <= 1e-9);
  const std::vector<std::size_t> keep{0};
  const UnlearnState plain = federated_descent_round(s, keep, lr, delta);
  CHECK(max_abs_diff(r.state.global, plain.global) <= 1e-9);
  CHECK(std::abs(r.record.retained_loss - pooled_loss(plain.global, plain.data, keep, delta)) <= 1e-9);
}

TEST_CASE("unlearning round bookkeeping") {
  UnlearnState s = make_synthetic_unlearn({}, 5);
  UnlearnRequest req{{3}, {{3, s.data[3]}}};
  const auto r = unlearning_round(s, req, 0.5, 0.1, DpConfig{1.0, 0.0, 3});
  CHECK(r.state.excluded == std::set<std::size_t>{3});
  CHECK(r.record.orthogonality_error <= 1e-10);
  CHECK(r.state.round == 1);
  CHECK(retained_devices(r.state, UnlearnRequest{{2}, {{2, s.data[2]}}}) ==
        std::vector<std::size_t>{0, 1});

  const auto a = unlearning_round(s, req, 0.5, 0.1, DpConfig{1.0, 0.5, 3});
  const auto b = unlearning_round(s, req, 0.5, 0.1, DpConfig{1.0, 0.5, 3});
  CHECK(a.state.global == b.state.global);
  CHECK(a.state.global != r.state.global);
}

TEST_CASE("unlearn requests are validated") {
  const UnlearnState s = make_synthetic_unlearn({}, 5);
  CHECK_THROWS_AS(unlearning_round(s, UnlearnRequest{}, 0.5, 0.1), InputError);
  CHECK_THROWS_AS(unlearning_round(s, UnlearnRequest{{9}, {{9, s.data[0]}}}, 0.5, 0.1), InputError);
  CHECK_THROWS_AS(unlearning_round(s, UnlearnRequest{{1}, {}}, 0.5, 0.1), InputError);
}

TEST_CASE("flatten and unflatten are inverse") {
  CounterRng rng(45);
  const Matrix m = random_matrix(rng, 3, 4);
  CHECK(unflatten(flatten(m), 3, 4) == m);
  CHECK_THROWS_AS(unflatten(flatten(m), 4, 4), ShapeError);
}
