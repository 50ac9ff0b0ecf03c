#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "mta/linalg.hpp"

using namespace mta::linalg;

namespace {

SymMatrix random_spd(std::size_t n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SymMatrix a(n);
  std::vector<double> r(n * n);
  for (auto& v : r) v = u(gen);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += r[k * n + i] * r[k * n + j];
      a.set(i, j, s);
    }
  a.add_identity(0.1);
  return a;
}

Eigen::MatrixXd to_eigen(const SymMatrix& a) {
  Eigen::MatrixXd m(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) m(i, j) = a(i, j);
  return m;
}

double frob_diff(const SymMatrix& a, const SymMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s);
}

}  // namespace

TEST(Cholesky, IdentityFactorIsIdentity) {
  const auto f = cholesky(SymMatrix::identity(3));
  ASSERT_TRUE(f);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(f->lower(i, j), i == j ? 1.0 : 0.0);
}

TEST(Cholesky, DiagonalFactorIsSquareRoot) {
  const double d[] = {4.0, 9.0};
  const auto f = cholesky(SymMatrix::diagonal(d));
  ASSERT_TRUE(f);
  EXPECT_DOUBLE_EQ(f->lower(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f->lower(1, 1), 3.0);
  EXPECT_EQ(f->lower(1, 0), 0.0);
}

TEST(Cholesky, TwoByTwoReconstructsAndRejectsIndefinite) {
  const double pd[] = {2, 1, 1, 2};
  const SymMatrix a = SymMatrix::from_row_major(2, pd);
  const auto f = cholesky(a);
  ASSERT_TRUE(f);
  EXPECT_LE(frob_diff(f->reconstruct(), a), 1e-12 * a.frobenius_norm());
  const double indef[] = {1, 2, 2, 1};
  EXPECT_FALSE(cholesky(SymMatrix::from_row_major(2, indef)));
}

TEST(Cholesky, SolveExamples) {
  const auto id = cholesky(SymMatrix::identity(2));
  const Vector x1 = id->solve(Vector{3.0, -1.0});
  EXPECT_EQ(x1, (Vector{3.0, -1.0}));

  const double d[] = {2.0, 4.0};
  const Vector x2 = cholesky(SymMatrix::diagonal(d))->solve(Vector{2.0, 8.0});
  EXPECT_DOUBLE_EQ(x2[0], 1.0);
  EXPECT_DOUBLE_EQ(x2[1], 2.0);

  const double pd[] = {2, 1, 1, 2};
  const Vector x3 = cholesky(SymMatrix::from_row_major(2, pd))->solve(Vector{1.0, 1.0});
  EXPECT_NEAR(x3[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(x3[1], 1.0 / 3.0, 1e-15);
}

TEST(Cholesky, RandomSolveResidualAgainstEigen) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 2u, 5u, 17u, 50u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const SymMatrix a = random_spd(n, gen);
      Vector b(n);
      for (auto& v : b) v = u(gen);
      const auto f = cholesky(a);
      ASSERT_TRUE(f);
      const Vector x = f->solve(b);
      const Vector ax = a.multiply(x);
      const double res = norm2(subtract(ax, b));
      const double scale = to_eigen(a).norm() * norm2(x) + norm2(b);
      EXPECT_LE(res, 1e-10 * scale) << "n = " << n;

      const Eigen::VectorXd xe = to_eigen(a).llt().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], xe[i], 1e-8 * (1.0 + std::abs(xe[i])));
      EXPECT_LE(frob_diff(f->reconstruct(), a), 1e-12 * a.frobenius_norm());
    }
  }
}

TEST(Cholesky, RejectsShiftBeyondSmallestEigenvalue) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n = 1; n <= 5; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      SymMatrix a(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) a.set(i, j, u(gen));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a));
      const double lmin = es.eigenvalues().minCoeff();
      for (double excess : {1e-6, 0.1, 1.0}) {
        SymMatrix shifted = a;
        shifted.add_identity(-(lmin + excess));
        EXPECT_FALSE(cholesky(shifted)) << "n = " << n;
      }
      SymMatrix inside = a;
      inside.add_identity(-(lmin - 0.5));
      EXPECT_TRUE(cholesky(inside));
    }
  }
}

TEST(Cholesky, LowerSolveMatchesFactor) {
  std::mt19937_64 gen(2);
  const SymMatrix a = random_spd(6, gen);
  const auto f = cholesky(a);
  const Vector b{1, -2, 3, 0.5, 0, 1};
  const Vector y = f->solve_lower(b);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += f->lower(i, j) * y[j];
    EXPECT_NEAR(s, b[i], 1e-12);
  }
}

TEST(SymMatrix, UpdatesStaySymmetric) {
  SymMatrix a(3);
  a.set(0, 2, 1.5);
  a.add_outer(Vector{1, 2, 3}, 0.5);
  a.add_identity(2.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), a(j, i));
  EXPECT_DOUBLE_EQ(a(0, 2), 1.5 + 1.5);
  EXPECT_DOUBLE_EQ(a.quad_form(Vector{1, 0, 0}), 2.5);
  EXPECT_THROW(SymMatrix(0), std::invalid_argument);
}

TEST(VectorOps, Norms) {
  const Vector x{3, -4};
  EXPECT_DOUBLE_EQ(norm2(x), 5.0);
  EXPECT_DOUBLE_EQ(norm_inf(x), 4.0);
  EXPECT_DOUBLE_EQ(dot(x, Vector{1, 1}), -1.0);
}
