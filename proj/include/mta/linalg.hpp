#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mta::linalg {

using Vector = std::vector<double>;

// Dense symmetric matrix, full row-major storage. Writes go through set() so
// both triangles always hold identical values.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n);

  static SymMatrix identity(std::size_t n);
  static SymMatrix diagonal(std::span<const double> diag);
  // Builds from a row-major n*n buffer; the buffer must already be symmetric.
  static SymMatrix from_row_major(std::size_t n, std::span<const double> entries);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * n_ + j] = v;
    a_[j * n_ + i] = v;
  }
  std::span<const double> row_major() const { return a_; }

  // this += alpha * other
  void add_scaled(const SymMatrix& other, double alpha);
  // this += alpha * I
  void add_identity(double alpha);
  // this += alpha * v v^T
  void add_outer(std::span<const double> v, double alpha);

  Vector multiply(std::span<const double> x) const;
  // <x, A x>
  double quad_form(std::span<const double> x) const;
  double frobenius_norm() const;
  double max_abs_diagonal() const;

  friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

// Lower-triangular factor L with L L^T = A.
class CholFactor {
 public:
  std::size_t size() const { return n_; }
  double lower(std::size_t i, std::size_t j) const { return l_[i * n_ + j]; }

  // Solves A x = b.
  Vector solve(std::span<const double> b) const;
  // Solves L y = b.
  Vector solve_lower(std::span<const double> b) const;
  SymMatrix reconstruct() const;

 private:
  friend std::optional<CholFactor> cholesky(const SymMatrix& a);
  std::size_t n_ = 0;
  std::vector<double> l_;
};

// Returns nullopt when a pivot drops to or below 1e-12 times the largest
// diagonal magnitude, i.e. the matrix is not (numerically) positive definite.
std::optional<CholFactor> cholesky(const SymMatrix& a);

inline bool is_positive_definite(const SymMatrix& a) { return cholesky(a).has_value(); }

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double norm_inf(std::span<const double> x);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector subtract(std::span<const double> x, std::span<const double> y);

}  // namespace mta::linalg
