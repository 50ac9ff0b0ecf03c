#include "mta/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mta::linalg {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string("dimension mismatch in ") + what);
}

}  // namespace

SymMatrix::SymMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {
  if (n == 0) throw std::invalid_argument("SymMatrix dimension must be positive");
}

SymMatrix SymMatrix::identity(std::size_t n) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) m.a_[i * n + i] = 1.0;
  return m;
}

SymMatrix SymMatrix::diagonal(std::span<const double> diag) {
  SymMatrix m(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m.a_[i * diag.size() + i] = diag[i];
  return m;
}

SymMatrix SymMatrix::from_row_major(std::size_t n, std::span<const double> entries) {
  require_same_size(entries.size(), n * n, "SymMatrix::from_row_major");
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (entries[i * n + j] != entries[j * n + i]) {
        throw std::invalid_argument("SymMatrix::from_row_major: input is not symmetric");
      }
      m.a_[i * n + j] = entries[i * n + j];
    }
  }
  return m;
}

void SymMatrix::add_scaled(const SymMatrix& other, double alpha) {
  require_same_size(n_, other.n_, "SymMatrix::add_scaled");
  for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += alpha * other.a_[k];
}

void SymMatrix::add_identity(double alpha) {
  for (std::size_t i = 0; i < n_; ++i) a_[i * n_ + i] += alpha;
}

void SymMatrix::add_outer(std::span<const double> v, double alpha) {
  require_same_size(n_, v.size(), "SymMatrix::add_outer");
  for (std::size_t i = 0; i < n_; ++i) {
    const double s = alpha * v[i];
    for (std::size_t j = 0; j < n_; ++j) a_[i * n_ + j] += s * v[j];
  }
}

Vector SymMatrix::multiply(std::span<const double> x) const {
  require_same_size(n_, x.size(), "SymMatrix::multiply");
  Vector y(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) s += a_[i * n_ + j] * x[j];
    y[i] = s;
  }
  return y;
}

double SymMatrix::quad_form(std::span<const double> x) const {
  const Vector ax = multiply(x);
  return dot(x, ax);
}

double SymMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : a_) s += v * v;
  return std::sqrt(s);
}

double SymMatrix::max_abs_diagonal() const {
  double m = 0.0;
  for (std::size_t i = 0; i < n_; ++i) m = std::max(m, std::abs(a_[i * n_ + i]));
  return m;
}

std::optional<CholFactor> cholesky(const SymMatrix& a) {
  const std::size_t n = a.size();
  const double pivot_floor = 1e-12 * a.max_abs_diagonal();
  CholFactor f;
  f.n_ = n;
  f.l_.assign(n * n, 0.0);
  auto& l = f.l_;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * n + k] * l[j * n + k];
    if (!(diag > pivot_floor)) return std::nullopt;  // also rejects NaN
    const double ljj = std::sqrt(diag);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return f;
}

Vector CholFactor::solve_lower(std::span<const double> b) const {
  require_same_size(n_, b.size(), "CholFactor::solve_lower");
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < n_; ++i) {
    double s = y[i];
    for (std::size_t k = 0; k < i; ++k) s -= l_[i * n_ + k] * y[k];
    y[i] = s / l_[i * n_ + i];
  }
  return y;
}

Vector CholFactor::solve(std::span<const double> b) const {
  Vector x = solve_lower(b);
  for (std::size_t ii = n_; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n_; ++k) s -= l_[k * n_ + ii] * x[k];
    x[ii] = s / l_[ii * n_ + ii];
  }
  return x;
}

SymMatrix CholFactor::reconstruct() const {
  SymMatrix a(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k <= j; ++k) s += l_[i * n_ + k] * l_[j * n_ + k];
      a.set(i, j, s);
    }
  }
  return a;
}

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector subtract(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "subtract");
  Vector r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] - y[i];
  return r;
}

}  // namespace mta::linalg
