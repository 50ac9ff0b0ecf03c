#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mta/linalg.hpp"
#include "mta/problem.hpp"

namespace mta {

using linalg::CholFactor;

// Regularized Taylor models frozen at x_k. With D = x - x_k and r = |D|, index i
// contributes
//   s_i(x) = T_{order_i}(x; x_k) + quad_reg[i]/2 r^2 + cubic_reg[i]/6 r^3,
// where order_0 = p and order_i = q for the constraints. The subproblem is
// min s_0(x) subject to s_i(x) <= 0.
struct SubproblemModel {
  TaylorData td;
  int p = 2;
  int q = 2;
  std::vector<double> quad_reg;
  std::vector<double> cubic_reg;

  std::size_t n() const { return td.center.size(); }
  std::size_t m() const { return td.f.size() - 1; }
  int order(std::size_t i) const { return i == 0 ? p : q; }
  // The dual carries the extra variable w exactly when there is a cubic term.
  bool has_w() const { return p == 2; }
};

// Coefficient mapping:
//   (2,2): c_0 = M_p + M, c_i = M_q^i
//   (2,1): c_0 = M_p, rho_0 = M, rho_i = M_q^i
//   (1,1): rho_0 = M_p + M, rho_i = M_q^i
// Throws std::invalid_argument for any other (p, q) pair.
SubproblemModel build_model(const ProblemInstance& inst, std::span<const double> x_k, int p, int q,
                            double M_p, double M, std::span<const double> M_q);

// s_0(x) and s_i(x) evaluated at an arbitrary point.
double model_value(const SubproblemModel& model, std::size_t i, std::span<const double> x);

// Value, gradient and Hessian of s_i at x. The cubic term contributes
// c_i/2 (r I + D D^T / r), which vanishes at D = 0.
struct ModelDerivatives {
  double value = 0.0;
  linalg::Vector gradient;
  SymMatrix hessian;
};
ModelDerivatives model_derivatives(const SubproblemModel& model, std::size_t i,
                                   std::span<const double> x);

// Lagrangian of the model with u_0 = 1; u holds the m constraint multipliers.
//   l(u) + <g(u), D> + 1/2 <A(u) D, D> + Mt(u)/6 r^3
// with A(u) = sum u_i (H_i + rho_i I) and Mt(u) = sum u_i c_i.
double theta(const SubproblemModel& model, std::span<const double> x, std::span<const double> u);

// A point of the dual domain: u >= 0 (u_0 = 1 is implicit), w >= 0 and
// H(u, w) = A(u) + w/2 I positive definite.
struct DualState {
  std::vector<double> u;  // constraint multipliers u_1..u_m
  double w = 0.0;
  CholFactor chol;        // factor of H(u, w)
  linalg::Vector d;       // -H(u, w)^{-1} g(u)
  double r = 0.0;         // |d|
  double mt = 0.0;        // Mt(u)
  double l = 0.0;         // l(u)
  double g_hinv_g = 0.0;  // <H^{-1} g, g>
};

// Returns nullopt when (u, w) lies outside the dual domain.
std::optional<DualState> make_dual_state(const SubproblemModel& model, std::span<const double> u,
                                         double w);

double beta(const SubproblemModel& model, const DualState& s);

struct BetaGradient {
  std::vector<double> u;
  std::optional<double> w;
};
BetaGradient beta_gradient(const SubproblemModel& model, const DualState& s);

// Closed form of theta(x(u,w), u) - beta(u, w):
//   Mt/12 (w/Mt + 2r)(r - w/Mt)^2,   identically 0 without a cubic term.
double duality_gap(const SubproblemModel& model, const DualState& s);

// u = 0 and, when the model has a cubic term, the first w in 1, 2, 4, ... that
// makes H(u, w) positive definite.
DualState initialize_dual(const SubproblemModel& model);

struct DualTolerances {
  double eta1 = 1e-6;
  double eta2 = 1e-6;
  double eta3 = 1e-6;
  double gap_tol = 1e-10;
  int max_iters = 5000;
};

enum class SubproblemStatus { kConverged, kMaxIters, kDegenerate };

const char* to_string(SubproblemStatus s);

struct SubproblemSolution {
  linalg::Vector x_next;
  std::vector<double> u;  // u_1..u_m
  double w = 0.0;
  double gap = 0.0;
  double beta = 0.0;
  double primal_value = 0.0;  // theta(x_next, u)
  std::vector<double> model_constraint_values;  // s_i(x_next), i = 1..m
  double step_norm = 0.0;
  int dual_iters = 0;
  SubproblemStatus status = SubproblemStatus::kMaxIters;
  std::vector<double> beta_history;  // accepted dual values, in order
};

class InfeasibleModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maximizes beta over the dual domain by projected ascent. Each iteration
// first tries a projected Newton step on the free variables and falls back to
// a projected gradient step whose length is doubled after successes and
// halved after failures. Steps that leave the domain are rejected outright.
// Stops once the duality gap, complementarity, model feasibility and the
// projected gradient are all within their tolerances.
SubproblemSolution solve_dual(const SubproblemModel& model, const DualTolerances& tol,
                              const std::vector<double>* warm_u = nullptr);

// Local solve of the same model by a primal-dual interior-point method with
// slacks, inertia correction and an l1 merit line search, started at x_start
// (usually x_k, which is feasible for the model). It finds a KKT point rather
// than the global minimizer, so it is the fallback for models whose Lagrangian
// dual has a gap. status is kConverged when the complementarity, feasibility and
// stationarity conditions of solve_dual hold at x_next; gap and beta are not
// certified (NaN).
SubproblemSolution solve_local(const SubproblemModel& model, const DualTolerances& tol,
                               std::span<const double> x_start,
                               const std::vector<double>* u_start = nullptr);

}  // namespace mta
