#include "edgelam/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edgelam/error.hpp"

namespace edgelam {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + dims(a) + " vs " + dims(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data has " + std::to_string(data_.size()) +
                     " entries, expected " + std::to_string(rows_ * cols_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw DomainError("matrix entry is not finite");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

ProbVector::ProbVector(std::vector<double> p) : p_(std::move(p)) {
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("probability entry outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("probabilities do not sum to 1");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " x " + dims(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aip * b(p, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) { return axpy(a, 1.0, b); }

Matrix subtract(const Matrix& a, const Matrix& b) { return axpy(a, -1.0, b); }

Matrix scale(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix axpy(const Matrix& a, double s, const Matrix& b) {
  require_same_shape(a, b, "axpy");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * bd[i];
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: " + dims(m) + " x vector of " + std::to_string(x.size()));
  }
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), x);
  return out;
}

double frobenius_norm(const Matrix& m) { return norm(m.data()); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<Vector> gram_schmidt(const std::vector<Vector>& vs, double tol) {
  if (!(tol > 0.0)) throw DomainError("gram_schmidt: tol must be positive");
  std::vector<Vector> basis;
  if (vs.empty()) return basis;
  const std::size_t n = vs.front().size();
  for (const Vector& v : vs) {
    if (v.size() != n) throw ShapeError("gram_schmidt: vectors differ in length");
    const double input_norm = norm(v);
    if (input_norm == 0.0) continue;
    Vector w = v;
    // Classical GS: all coefficients against the original w, then a second pass.
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<double> coeff(basis.size());
      for (std::size_t j = 0; j < basis.size(); ++j) coeff[j] = dot(basis[j], w);
      for (std::size_t j = 0; j < basis.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) w[i] -= coeff[j] * basis[j][i];
    }
    const double residual = norm(w);
    if (residual < tol * input_norm) continue;
    for (double& x : w) x /= residual;
    basis.push_back(std::move(w));
  }
  return basis;
}

ProbVector softmax(std::span<const double> z) {
  if (z.empty()) return ProbVector{};
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return ProbVector(std::move(p));
}

}  // namespace edgelam
