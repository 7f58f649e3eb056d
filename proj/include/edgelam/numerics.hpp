#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace edgelam {

using Vector = std::vector<double>;

/// Dense row-major matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  /// Zero matrix.
  Matrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of row-major data; throws ShapeError on a size mismatch
  /// and DomainError on a non-finite entry.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Probability vector: nonnegative entries summing to one within 1e-9.
class ProbVector {
 public:
  ProbVector() = default;
  /// Throws DomainError if the entries do not form a distribution.
  explicit ProbVector(std::vector<double> p);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<double> p_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
/// a + s * b
Matrix axpy(const Matrix& a, double s, const Matrix& b);
/// m * x for a column vector x.
Vector matvec(const Matrix& m, std::span<const double> x);
double frobenius_norm(const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Classical Gram-Schmidt with one re-orthogonalization pass. A vector is
/// dropped when its residual norm falls below tol times its own input norm.
std::vector<Vector> gram_schmidt(const std::vector<Vector>& vs, double tol = 1e-8);

/// Max-subtracted softmax.
ProbVector softmax(std::span<const double> z);

}  // namespace edgelam
