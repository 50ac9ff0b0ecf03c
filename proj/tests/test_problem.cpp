#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mta/instance_io.hpp"
#include "mta/problem.hpp"

using namespace mta;

namespace {

Vector random_point(std::size_t n, double radius, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Vector x(n);
  for (auto& v : x) v = u(gen);
  return x;
}

double min_eigenvalue(const SymMatrix& a) {
  Eigen::MatrixXd m(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) m(i, j) = a(i, j);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

double max_eigenvalue(const SymMatrix& a) {
  Eigen::MatrixXd m(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) m(i, j) = a(i, j);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().maxCoeff();
}

CompositeFunction affine(Vector c, double d) {
  CompositeFunction f;
  f.Q = SymMatrix(c.size());
  f.a.assign(c.size(), 0.0);
  f.c = std::move(c);
  f.d = d;
  return f;
}

ProblemInstance custom(std::vector<CompositeFunction> fs, Vector x0) {
  ProblemInstance::Data d;
  d.n = x0.size();
  d.m = fs.size() - 1;
  d.functions = std::move(fs);
  d.x0 = std::move(x0);
  d.lip_grad.assign(d.m + 1, 1.0);
  d.lip_hess.assign(d.m + 1, 1.0);
  d.convex.assign(d.m + 1, false);
  return ProblemInstance::create(std::move(d));
}

// Central differences of the value and of the gradient.
void expect_oracles_match_fd(const ProblemInstance& inst, std::size_t i, const Vector& x) {
  const std::size_t n = inst.n();
  const double h = 1e-5 * (1.0 + linalg::norm2(x));
  const Vector g = inst.gradient(i, x);
  const SymMatrix H = inst.hessian(i, x);
  Vector fd_g(n);
  double hess_err = 0.0, hess_scale = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    fd_g[j] = (inst.value(i, xp) - inst.value(i, xm)) / (2 * h);
    const Vector gp = inst.gradient(i, xp), gm = inst.gradient(i, xm);
    for (std::size_t k = 0; k < n; ++k) {
      const double fd = (gp[k] - gm[k]) / (2 * h);
      hess_err = std::max(hess_err, std::abs(fd - H(k, j)));
      hess_scale = std::max(hess_scale, std::abs(H(k, j)));
    }
  }
  EXPECT_LE(linalg::norm2(linalg::subtract(fd_g, g)), 1e-5 * std::max(1.0, linalg::norm2(g)));
  EXPECT_LE(hess_err, 1e-4 * std::max(1.0, hess_scale));
}

}  // namespace

TEST(Evaluate, BenchmarkObjectiveAtOrigin) {
  const auto inst = generate_benchmark(10, 10, 42);
  const Vector x(10, 0.0);
  EXPECT_NEAR(inst.value(0, x), std::log(2.0) + inst.data().functions[0].d, 1e-15);
}

TEST(Evaluate, OraclesMatchFiniteDifferences) {
  std::mt19937_64 gen(1);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inst = generate_benchmark(6, 3, seed);
    const auto cvx = generate_convex_benchmark(6, 3, seed, 0.5);
    for (int t = 0; t < 10; ++t) {
      const Vector x = random_point(6, 1.0, gen);
      for (std::size_t i = 0; i <= 3; ++i) {
        expect_oracles_match_fd(inst, i, x);
        expect_oracles_match_fd(cvx, i, x);
      }
    }
  }
}

TEST(Evaluate, QuadraticOnly) {
  const double q[] = {2, 1, 1, 3};
  CompositeFunction f = affine({0, 0}, 0.0);
  f.Q = SymMatrix::from_row_major(2, q);
  const auto inst = custom({f}, {0, 0});
  const Vector e1{1, 0};
  const Evaluation ev = inst.evaluate(0, e1, 2);
  EXPECT_DOUBLE_EQ(ev.value, 1.0);
  EXPECT_EQ(*ev.gradient, (Vector{2, 1}));
  EXPECT_EQ(*ev.hessian, f.Q);
  EXPECT_FALSE(inst.evaluate(0, e1, 0).gradient);
  EXPECT_FALSE(inst.evaluate(0, e1, 1).hessian);
}

TEST(Evaluate, CubicAbsDerivatives) {
  CompositeFunction f = affine({1.0}, 0.0);
  f.kind = Nonlinearity::kCubicAbs;
  f.a = {1.0};
  const auto inst = custom({f}, {0.0});
  EXPECT_DOUBLE_EQ(inst.value(0, Vector{-0.5}), -0.5 + 0.125);
  expect_oracles_match_fd(inst, 0, {0.7});
  expect_oracles_match_fd(inst, 0, {-0.3});
}

TEST(TaylorValue, Examples) {
  const auto inst = generate_benchmark(4, 2, 3);
  const Vector c{0.1, -0.2, 0.3, 0.0};
  const int orders[] = {2, 1, 2};
  const TaylorData td = make_taylor_data(inst, c, orders);
  EXPECT_EQ(taylor_value(td, 0, 2, c), inst.value(0, c));
  EXPECT_EQ(taylor_value(td, 1, 1, c), inst.value(1, c));
  EXPECT_FALSE(td.h[1]);
  EXPECT_THROW(taylor_value(td, 1, 2, c), std::logic_error);

  // Polynomials of degree <= order are reproduced exactly.
  const auto lin = custom({affine({2.0, -1.0}, 0.0)}, {0, 0});
  const int o1[] = {1};
  const TaylorData tl = make_taylor_data(lin, Vector{0.3, 0.4}, o1);
  EXPECT_NEAR(taylor_value(tl, 0, 1, Vector{5.0, 7.0}), 3.0, 1e-14);

  CompositeFunction quad = affine({0, 0}, 0.0);
  quad.Q = SymMatrix::identity(2);
  const auto qi = custom({quad}, {0, 0});
  const int o2[] = {2};
  const TaylorData tq = make_taylor_data(qi, Vector{0, 0}, o2);
  EXPECT_DOUBLE_EQ(taylor_value(tq, 0, 2, Vector{1, 1}), 1.0);
}

TEST(MaxViolation, Examples) {
  const auto inst = generate_benchmark(5, 4, 8);
  EXPECT_EQ(max_violation(inst, inst.x0()), 0.0);
  const auto unconstrained = generate_benchmark(3, 0, 8);
  EXPECT_EQ(max_violation(unconstrained, Vector{9, 9, 9}), 0.0);
  const auto one = custom({affine({0.0}, 0.0), affine({1.0}, -1.0)}, {0.0});
  EXPECT_DOUBLE_EQ(max_violation(one, Vector{3.0}), 2.0);
}

TEST(Generate, SeededDeterminism) {
  const auto a = generate_benchmark(10, 10, 42);
  const auto b = generate_benchmark(10, 10, 42);
  EXPECT_EQ(instance_to_json(a).dump(), instance_to_json(b).dump());
  const auto c = generate_benchmark(10, 10, 43);
  EXPECT_NE(instance_to_json(a).dump(), instance_to_json(c).dump());
  EXPECT_EQ(instance_to_json(generate_convex_benchmark(4, 2, 7, 1.0)).dump(),
            instance_to_json(generate_convex_benchmark(4, 2, 7, 1.0)).dump());
}

TEST(Generate, ConstraintsHaveExactMarginAtOrigin) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_benchmark(7, 6, seed);
    for (std::size_t i = 1; i <= 6; ++i) EXPECT_NEAR(inst.value(i, inst.x0()), -kFeasibilityMargin, 1e-15);
    const auto cvx = generate_convex_benchmark(7, 6, seed, 0.0);
    for (std::size_t i = 1; i <= 6; ++i) EXPECT_NEAR(cvx.value(i, cvx.x0()), -kFeasibilityMargin, 1e-15);
  }
}

TEST(Generate, NonconvexQuadraticsAreIndefinite) {
  for (std::size_t n = 2; n <= 5; ++n) {
    const auto inst = generate_benchmark(n, 3, 100 + n);
    for (const auto& f : inst.data().functions) {
      EXPECT_LT(min_eigenvalue(f.Q), 0.0);
      EXPECT_GT(max_eigenvalue(f.Q), 0.0);
    }
  }
}

TEST(Generate, ConvexHessiansArePsd) {
  std::mt19937_64 gen(4);
  const auto inst = generate_convex_benchmark(2, 1, 7, 0.0);
  for (int t = 0; t < 20; ++t) {
    const Vector x = random_point(2, 3.0, gen);
    for (std::size_t i = 0; i <= 1; ++i) {
      SymMatrix h = inst.hessian(i, x);
      h.add_identity(1e-10);
      EXPECT_TRUE(linalg::is_positive_definite(h));
    }
  }
}

TEST(Generate, StrongConvexityModulus) {
  std::mt19937_64 gen(6);
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto inst = generate_convex_benchmark(n, 2, 11, 1.0);
    for (int t = 0; t < 10; ++t) EXPECT_GE(min_eigenvalue(inst.hessian(0, random_point(n, 2.0, gen))), 1.0 - 1e-12);
  }
}

// |F(y) - T_q(y; x)| <= L |y - x|^{q+1} / (q+1)! validates the declared bounds.
TEST(Generate, TaylorRemainderWithinDeclaredBounds) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> radius(0.0, 1.0);
  for (int family = 0; family < 2; ++family) {
    const auto inst = family == 0 ? generate_benchmark(5, 3, 21) : generate_convex_benchmark(5, 3, 21, 0.3);
    for (int t = 0; t < 100; ++t) {
      const Vector x = random_point(5, 2.0, gen);
      Vector dir = random_point(5, 1.0, gen);
      const double s = radius(gen) / linalg::norm2(dir);
      for (auto& v : dir) v *= s;
      Vector y = x;
      linalg::axpy(1.0, dir, y);
      const double r = linalg::norm2(dir);
      const int orders[] = {2, 2, 2, 2};
      const TaylorData td = make_taylor_data(inst, x, orders);
      for (std::size_t i = 0; i <= 3; ++i) {
        const double fy = inst.value(i, y);
        EXPECT_LE(std::abs(fy - taylor_value(td, i, 1, y)), inst.lip_grad(i) * r * r / 2 + 1e-12);
        EXPECT_LE(std::abs(fy - taylor_value(td, i, 2, y)), inst.lip_hess(i) * r * r * r / 6 + 1e-12);
      }
    }
  }
}

TEST(Create, RejectsInfeasibleStart) {
  EXPECT_THROW(custom({affine({0.0}, 0.0), affine({1.0}, -1.0)}, {3.0}), InfeasibleStartError);
}

TEST(Create, RejectsNonpositiveLipschitzBounds) {
  ProblemInstance::Data d;
  d.n = 1;
  d.m = 0;
  d.functions = {affine({1.0}, 0.0)};
  d.x0 = {0.0};
  d.lip_grad = {0.0};
  d.lip_hess = {1.0};
  d.convex = {false};
  EXPECT_THROW(ProblemInstance::create(d), std::invalid_argument);
}
