#include "mta/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace mta {

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Model constraint values s_i at x(u, w) = x_k + d, i = 1..m.
std::vector<double> constraint_values_at_step(const SubproblemModel& model, const DualState& s) {
  const std::size_t m = model.m();
  const double r2 = s.r * s.r;
  std::vector<double> out(m);
  for (std::size_t i = 1; i <= m; ++i) {
    double v = model.td.f[i] + linalg::dot(model.td.g[i], s.d);
    if (model.td.h[i]) v += 0.5 * model.td.h[i]->quad_form(s.d);
    v += 0.5 * model.quad_reg[i] * r2 + model.cubic_reg[i] * r2 * s.r / 6.0;
    out[i - 1] = v;
  }
  return out;
}

// Negative-semidefinite Hessian of beta in the variables (u_1..u_m[, w]).
SymMatrix beta_hessian(const SubproblemModel& model, const DualState& s) {
  const std::size_t m = model.m();
  const std::size_t nv = m + (model.has_w() ? 1 : 0);
  // Column j of T is the derivative of H(u,w) d + g(u) with respect to v_j.
  std::vector<linalg::Vector> z(nv);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t i = j + 1;
    linalg::Vector t = model.td.g[i];
    if (model.td.h[i]) linalg::axpy(1.0, model.td.h[i]->multiply(s.d), t);
    linalg::axpy(model.quad_reg[i], s.d, t);
    z[j] = s.chol.solve_lower(t);
  }
  if (model.has_w()) {
    linalg::Vector t = s.d;
    for (auto& v : t) v *= 0.5;
    z[m] = s.chol.solve_lower(t);
  }
  SymMatrix hess(nv);
  for (std::size_t a = 0; a < nv; ++a)
    for (std::size_t b = a; b < nv; ++b) hess.set(a, b, -linalg::dot(z[a], z[b]));
  if (model.has_w()) {
    // -w^3 / (12 Mt^2) is concave with rank-one Hessian -(w / (2 Mt^2)) v v^T.
    linalg::Vector v(nv);
    for (std::size_t j = 0; j < m; ++j) v[j] = -(s.w / s.mt) * model.cubic_reg[j + 1];
    v[m] = 1.0;
    hess.add_outer(v, -s.w / (2.0 * s.mt * s.mt));
  }
  return hess;
}

}  // namespace

const char* to_string(SubproblemStatus s) {
  switch (s) {
    case SubproblemStatus::kConverged: return "Converged";
    case SubproblemStatus::kMaxIters: return "MaxIters";
    case SubproblemStatus::kDegenerate: return "Degenerate";
  }
  return "?";
}

SubproblemModel build_model(const ProblemInstance& inst, std::span<const double> x_k, int p, int q,
                            double M_p, double M, std::span<const double> M_q) {
  const bool supported = (p == 1 && q == 1) || (p == 2 && q == 1) || (p == 2 && q == 2);
  if (!supported) throw std::invalid_argument(fmt::format("unsupported model orders ({}, {})", p, q));
  if (!(M_p > 0.0) || !(M > 0.0)) throw std::invalid_argument("M_p and M must be positive");
  if (M_q.size() != inst.m()) throw std::invalid_argument("need one M_q per constraint");
  for (double v : M_q) {
    if (!(v > 0.0)) throw std::invalid_argument("M_q entries must be positive");
  }

  const std::size_t m = inst.m();
  std::vector<int> orders(m + 1, q);
  orders[0] = p;
  SubproblemModel model;
  model.td = make_taylor_data(inst, x_k, orders);
  model.p = p;
  model.q = q;
  model.quad_reg.assign(m + 1, 0.0);
  model.cubic_reg.assign(m + 1, 0.0);
  if (p == 2 && q == 2) {
    model.cubic_reg[0] = M_p + M;
    for (std::size_t i = 1; i <= m; ++i) model.cubic_reg[i] = M_q[i - 1];
  } else if (p == 2) {
    model.cubic_reg[0] = M_p;
    model.quad_reg[0] = M;
    for (std::size_t i = 1; i <= m; ++i) model.quad_reg[i] = M_q[i - 1];
  } else {
    model.quad_reg[0] = M_p + M;
    for (std::size_t i = 1; i <= m; ++i) model.quad_reg[i] = M_q[i - 1];
  }
  return model;
}

double model_value(const SubproblemModel& model, std::size_t i, std::span<const double> x) {
  const double r = linalg::norm2(linalg::subtract(x, model.td.center));
  return taylor_value(model.td, i, model.order(i), x) + 0.5 * model.quad_reg[i] * r * r +
         model.cubic_reg[i] * r * r * r / 6.0;
}

double theta(const SubproblemModel& model, std::span<const double> x, std::span<const double> u) {
  if (u.size() != model.m()) throw std::invalid_argument("theta: need m multipliers");
  double total = model_value(model, 0, x);
  for (std::size_t i = 1; i <= model.m(); ++i) total += u[i - 1] * model_value(model, i, x);
  return total;
}

std::optional<DualState> make_dual_state(const SubproblemModel& model, std::span<const double> u,
                                         double w) {
  const std::size_t n = model.n(), m = model.m();
  if (u.size() != m) throw std::invalid_argument("make_dual_state: need m multipliers");
  for (double v : u) {
    if (!(v >= 0.0) || !std::isfinite(v)) return std::nullopt;
  }
  if (!(w >= 0.0) || !std::isfinite(w) || (!model.has_w() && w != 0.0)) return std::nullopt;

  SymMatrix h(n);
  double rho = model.quad_reg[0];
  if (model.td.h[0]) h.add_scaled(*model.td.h[0], 1.0);
  DualState s;
  s.u.assign(u.begin(), u.end());
  s.w = w;
  s.mt = model.cubic_reg[0];
  s.l = model.td.f[0];
  linalg::Vector g = model.td.g[0];
  for (std::size_t i = 1; i <= m; ++i) {
    const double ui = u[i - 1];
    if (ui == 0.0) continue;
    if (model.td.h[i]) h.add_scaled(*model.td.h[i], ui);
    rho += ui * model.quad_reg[i];
    s.mt += ui * model.cubic_reg[i];
    s.l += ui * model.td.f[i];
    linalg::axpy(ui, model.td.g[i], g);
  }
  h.add_identity(rho + 0.5 * w);
  auto chol = linalg::cholesky(h);
  if (!chol) return std::nullopt;
  s.chol = std::move(*chol);
  const linalg::Vector z = s.chol.solve_lower(g);
  s.g_hinv_g = linalg::dot(z, z);
  s.d = s.chol.solve(g);
  for (auto& v : s.d) v = -v;
  s.r = linalg::norm2(s.d);
  return s;
}

double beta(const SubproblemModel& model, const DualState& s) {
  double b = s.l - 0.5 * s.g_hinv_g;
  if (model.has_w()) b -= s.w * s.w * s.w / (12.0 * s.mt * s.mt);
  return b;
}

BetaGradient beta_gradient(const SubproblemModel& model, const DualState& s) {
  const std::size_t m = model.m();
  BetaGradient grad;
  grad.u.resize(m);
  const double r2 = s.r * s.r;
  const double cubic_term = model.has_w() ? s.w * s.w * s.w / (6.0 * s.mt * s.mt * s.mt) : 0.0;
  for (std::size_t i = 1; i <= m; ++i) {
    double v = model.td.f[i] + linalg::dot(model.td.g[i], s.d);
    if (model.td.h[i]) v += 0.5 * model.td.h[i]->quad_form(s.d);
    v += 0.5 * model.quad_reg[i] * r2 + model.cubic_reg[i] * cubic_term;
    grad.u[i - 1] = v;
  }
  if (model.has_w()) grad.w = 0.25 * r2 - s.w * s.w / (4.0 * s.mt * s.mt);
  return grad;
}

double duality_gap(const SubproblemModel& model, const DualState& s) {
  if (!model.has_w()) return 0.0;
  const double ratio = s.w / s.mt;
  const double diff = s.r - ratio;
  return s.mt / 12.0 * (ratio + 2.0 * s.r) * diff * diff;
}

DualState initialize_dual(const SubproblemModel& model) {
  const std::vector<double> u(model.m(), 0.0);
  if (!model.has_w()) {
    auto s = make_dual_state(model, u, 0.0);
    if (!s) throw std::logic_error("first-order model without a positive quadratic regularizer");
    return std::move(*s);
  }
  for (double w = 1.0; std::isfinite(w); w *= 2.0) {
    if (auto s = make_dual_state(model, u, w)) return std::move(*s);
  }
  throw std::logic_error("no finite w makes H(u, w) positive definite");
}

namespace {

struct InnerMax {
  DualState state;
  bool boundary = false;  // supremum over w sits on the boundary of the domain
};

double projected_gradient_norm(const SubproblemModel& model, const DualState& s) {
  const BetaGradient grad = beta_gradient(model, s);
  double total = 0.0;
  for (std::size_t i = 0; i < grad.u.size(); ++i) {
    const double pg = s.u[i] > 0.0 ? grad.u[i] : std::max(grad.u[i], 0.0);
    total += pg * pg;
  }
  return std::sqrt(total);
}

// Over the last kWindow iterations most Newton steps were cut back and beta
// gained almost nothing relative to its total gain. The ascent is then
// creeping along a kink of phi, which happens when the dual has a gap.
bool creeping(const std::vector<double>& history, const std::vector<char>& shortened,
              double next_beta) {
  constexpr std::size_t kWindow = 100;
  if (shortened.size() < 2 * kWindow) return false;
  const auto cut = std::count(shortened.end() - kWindow, shortened.end(), 1);
  if (cut < static_cast<long>(kWindow / 2)) return false;
  const double recent = next_beta - history[history.size() - kWindow];
  const double total = next_beta - history.front();
  return recent <= 1e-4 * total;
}

// r(w) - w / Mt, convex and decreasing in w.
double w_residual(const DualState& s) { return s.r - s.w / s.mt; }

// Maximizes beta(u, .) over w >= 0 for fixed u. beta is concave in w and its
// derivative has the sign of r(w) - w/Mt, so this is a 1-D root search started
// from the left of the root, where Newton's method increases monotonically.
InnerMax maximize_w(const SubproblemModel& model, std::span<const double> u, double w_guess) {
  if (!model.has_w()) {
    auto s = make_dual_state(model, u, 0.0);
    if (!s) throw std::logic_error("first-order model without a positive quadratic regularizer");
    return {std::move(*s), false};
  }
  double w = std::max(w_guess, 1e-300);
  std::optional<DualState> cur = make_dual_state(model, u, w);
  while (!cur) {
    w = std::max(2.0 * w, 1.0);
    if (!std::isfinite(w)) throw std::logic_error("no finite w makes H(u, w) positive definite");
    cur = make_dual_state(model, u, w);
  }

  if (w_residual(*cur) < 0.0) {
    // The root lies to the left. Find a feasible point with nonnegative
    // residual between the domain boundary and cur.
    DualState hi = std::move(*cur);
    cur.reset();
    if (auto zero = make_dual_state(model, u, 0.0)) {
      cur = std::move(zero);
    } else {
      double a = 0.0;  // infeasible
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + hi.w);
        if (!(mid > a && mid < hi.w)) break;
        auto s = make_dual_state(model, u, mid);
        if (!s) {
          a = mid;
        } else if (w_residual(*s) < 0.0) {
          hi = std::move(*s);
        } else {
          cur = std::move(s);
          break;
        }
      }
      if (!cur) return {std::move(hi), true};
    }
  }

  DualState lo = std::move(*cur);
  double hi_w = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 100; ++it) {
    const double f = w_residual(lo);
    if (f <= 1e-15 * (lo.r + lo.w / lo.mt) || lo.r == 0.0) break;
    const linalg::Vector z = lo.chol.solve_lower(lo.d);
    const double fprime = -0.5 * linalg::dot(z, z) / lo.r - 1.0 / lo.mt;
    double next_w = lo.w - f / fprime;
    if (!(next_w < hi_w)) next_w = 0.5 * (lo.w + hi_w);
    if (!(next_w > lo.w)) break;
    auto s = make_dual_state(model, u, next_w);
    if (s && w_residual(*s) >= 0.0) {
      lo = std::move(*s);
    } else {
      hi_w = next_w;
      if (hi_w - lo.w <= 1e-15 * hi_w) break;
    }
  }
  return {std::move(lo), false};
}

}  // namespace

SubproblemSolution solve_dual(const SubproblemModel& model, const DualTolerances& tol,
                              const std::vector<double>* warm_u) {
  const std::size_t m = model.m();
  const bool has_w = model.has_w();
  const double kkt_factor = 1.0 / factorial(model.q + 1);
  const int stat_power = std::min(model.p, model.q);
  constexpr double kArmijo = 1e-4;
  constexpr double kFlat = 1e-14;

  std::vector<double> u0(m, 0.0);
  if (warm_u && warm_u->size() == m &&
      std::all_of(warm_u->begin(), warm_u->end(), [](double v) { return v >= 0.0 && std::isfinite(v); })) {
    u0 = *warm_u;
  }
  InnerMax cur = maximize_w(model, u0, initialize_dual(model).w);
  double b = beta(model, cur.state);

  SubproblemSolution sol;
  sol.beta_history.push_back(b);
  double grad_step = 1.0;
  bool stalled = false;
  std::vector<char> shortened;  // per iteration: Newton step was cut back
  int iter = 0;
  std::vector<double> s_vals;

  for (;; ++iter) {
    const DualState& state = cur.state;
    s_vals = constraint_values_at_step(model, state);
    const BetaGradient grad = beta_gradient(model, state);
    const double r = state.r;

    const bool all_model_feasible =
        std::all_of(s_vals.begin(), s_vals.end(), [](double v) { return v <= 0.0; });
    if (r <= 1e-14 && all_model_feasible) {
      sol.status = SubproblemStatus::kDegenerate;
      break;
    }

    const double slack = kkt_factor * std::pow(r, model.q + 1);
    bool done = duality_gap(model, state) <= tol.gap_tol * (1.0 + std::abs(b));
    for (std::size_t i = 0; i < m && done; ++i) {
      if (std::abs(state.u[i] * s_vals[i]) > tol.eta2 * slack) done = false;
      if (std::max(s_vals[i], 0.0) > tol.eta3 * slack) done = false;
    }
    double pg_norm2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double pg = state.u[i] > 0.0 ? grad.u[i] : std::max(grad.u[i], 0.0);
      pg_norm2 += pg * pg;
    }
    if (done && std::sqrt(pg_norm2) <= tol.eta1 * std::pow(r, stat_power)) {
      sol.status = SubproblemStatus::kConverged;
      break;
    }
    if (iter >= tol.max_iters || stalled || m == 0) {
      sol.status = SubproblemStatus::kMaxIters;
      break;
    }
    if (linalg::norm_inf(state.u) > 1e15) {
      throw InfeasibleModelError("dual multipliers diverge: the model feasible set looks empty");
    }

    // Ascent on phi(u) = max_w beta(u, w). Projected Newton step (Bertsekas)
    // on the multipliers not pinned at zero, using the Schur complement of the
    // (u, w) Hessian.
    const std::vector<double>& v = state.u;
    const std::vector<double>& gv = grad.u;
    std::optional<InnerMax> candidate;
    double candidate_beta = b;
    bool newton_full = false;
    {
      double proj_res = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double moved = std::max(0.0, v[j] + gv[j]) - v[j];
        proj_res += moved * moved;
      }
      const double eps = std::min(1e-6, std::sqrt(proj_res));
      std::vector<std::size_t> free_idx;
      std::vector<bool> pinned(m, false);
      for (std::size_t j = 0; j < m; ++j) {
        if (v[j] <= eps && gv[j] <= 0.0) {
          pinned[j] = true;
        } else {
          free_idx.push_back(j);
        }
      }
      std::vector<double> dir(m, 0.0);
      bool have_dir = false;
      if (!free_idx.empty()) {
        const SymMatrix hess = beta_hessian(model, state);
        const std::size_t nf = free_idx.size();
        SymMatrix reduced(nf);
        double scale = 0.0;
        const bool schur = has_w && !cur.boundary && hess(m, m) < 0.0;
        for (std::size_t a = 0; a < nf; ++a) {
          for (std::size_t c = a; c < nf; ++c) {
            const std::size_t ia = free_idx[a], ic = free_idx[c];
            double h = hess(ia, ic);
            if (schur) h -= hess(ia, m) * hess(ic, m) / hess(m, m);
            reduced.set(a, c, -h);
          }
          scale = std::max(scale, reduced(a, a));
        }
        double mu = 1e-13 * (1.0 + scale);
        for (int attempt = 0; attempt < 12 && !have_dir; ++attempt, mu *= 100.0) {
          SymMatrix shifted = reduced;
          shifted.add_identity(mu);
          if (auto f = linalg::cholesky(shifted)) {
            std::vector<double> rhs(nf);
            for (std::size_t a = 0; a < nf; ++a) rhs[a] = gv[free_idx[a]];
            const auto step = f->solve(rhs);
            for (std::size_t a = 0; a < nf; ++a) dir[free_idx[a]] = step[a];
            have_dir = true;
          }
        }
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (pinned[j]) dir[j] = gv[j];
      }
      if (have_dir) {
        double alpha = 1.0;
        for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
          std::vector<double> trial(m);
          double predicted = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            trial[j] = std::max(0.0, v[j] + alpha * dir[j]);
            predicted += pinned[j] ? gv[j] * (trial[j] - v[j]) : alpha * gv[j] * dir[j];
          }
          InnerMax next = maximize_w(model, trial, state.w);
          const double nb = beta(model, next.state);
          bool ok = nb >= b && nb - b >= kArmijo * predicted;
          if (!ok && ls == 0 && std::abs(nb - b) <= kFlat * (1.0 + std::abs(b))) {
            // Changes in beta are below its rounding level: judge the full
            // Newton step by the projected gradient instead.
            ok = projected_gradient_norm(model, next.state) < 0.5 * std::sqrt(pg_norm2);
          }
          if (ok) {
            newton_full = ls == 0;
            candidate = std::move(next);
            candidate_beta = nb;
            break;
          }
        }
      }
    }

    // Projected gradient step with doubling/halving step control, tried
    // whenever the Newton step had to be shortened.
    if (!newton_full) {
      double step = grad_step;
      for (; step >= 1e-30; step *= 0.5) {
        std::vector<double> trial(m);
        for (std::size_t j = 0; j < m; ++j) trial[j] = std::max(0.0, v[j] + step * gv[j]);
        InnerMax next = maximize_w(model, trial, state.w);
        const double nb = beta(model, next.state);
        if (nb > b) {
          if (!candidate || nb > candidate_beta) {
            candidate = std::move(next);
            candidate_beta = nb;
          }
          break;
        }
      }
      grad_step = step >= 1e-30 ? 2.0 * step : 1.0;
    }
    if (!candidate) {
      stalled = true;
      continue;
    }
    shortened.push_back(!newton_full);
    if (creeping(sol.beta_history, shortened, candidate_beta)) stalled = true;
    cur = std::move(*candidate);
    b = candidate_beta;
    sol.beta_history.push_back(b);
  }

  const DualState& state = cur.state;
  sol.dual_iters = iter;
  sol.x_next = model.td.center;
  linalg::axpy(1.0, state.d, sol.x_next);
  sol.u = state.u;
  sol.w = state.w;
  sol.beta = b;
  sol.gap = duality_gap(model, state);
  sol.step_norm = state.r;
  sol.primal_value = theta(model, sol.x_next, sol.u);
  sol.model_constraint_values.resize(m);
  for (std::size_t i = 1; i <= m; ++i) {
    sol.model_constraint_values[i - 1] = model_value(model, i, sol.x_next);
  }
  if (sol.status == SubproblemStatus::kMaxIters && !s_vals.empty()) {
    const double worst = *std::max_element(s_vals.begin(), s_vals.end());
    const double slack = tol.eta3 * kkt_factor * std::pow(state.r, model.q + 1);
    if (worst > slack && worst > 1e-8) {
      throw InfeasibleModelError(fmt::format(
          "dual ascent ended with model constraint violation {:.3e} after {} iterations", worst,
          iter));
    }
  }
  return sol;
}

ModelDerivatives model_derivatives(const SubproblemModel& model, std::size_t i,
                                   std::span<const double> x) {
  const linalg::Vector D = linalg::subtract(x, model.td.center);
  const double r = linalg::norm2(D);
  const std::size_t n = model.n();
  ModelDerivatives out{0.0, model.td.g[i], SymMatrix(n)};
  out.value = taylor_value(model.td, i, model.order(i), x);
  if (model.order(i) == 2) {
    linalg::axpy(1.0, model.td.h[i]->multiply(D), out.gradient);
    out.hessian.add_scaled(*model.td.h[i], 1.0);
  }
  const double rho = model.quad_reg[i], c = model.cubic_reg[i];
  out.value += 0.5 * rho * r * r + c * r * r * r / 6.0;
  linalg::axpy(rho + 0.5 * c * r, D, out.gradient);
  out.hessian.add_identity(rho + 0.5 * c * r);
  if (c > 0.0 && r > 0.0) out.hessian.add_outer(D, 0.5 * c / r);
  return out;
}

SubproblemSolution solve_local(const SubproblemModel& model, const DualTolerances& tol,
                               std::span<const double> x_start,
                               const std::vector<double>* u_start) {
  const std::size_t m = model.m();
  const double kkt_factor = 1.0 / factorial(model.q + 1);
  const int stat_power = std::min(model.p, model.q);
  constexpr int kMaxIters = 300;
  constexpr double kMuFloor = 1e-20;

  linalg::Vector x(x_start.begin(), x_start.end());
  double mu = 1e-2;
  std::vector<double> z(m), lam(m);
  {
    for (std::size_t i = 0; i < m; ++i) {
      z[i] = std::max(-model_value(model, i + 1, x), mu);
      lam[i] = mu / z[i];
      if (u_start && u_start->size() == m && (*u_start)[i] > lam[i]) {
        lam[i] = std::min((*u_start)[i], 1e6);
      }
    }
  }
  double nu = 1.0;
  double delta_prev = 0.0;

  SubproblemSolution sol;
  sol.status = SubproblemStatus::kMaxIters;
  std::vector<ModelDerivatives> ev(m + 1);
  int iter = 0;
  for (;; ++iter) {
    for (std::size_t i = 0; i <= m; ++i) ev[i] = model_derivatives(model, i, x);
    linalg::Vector rd = ev[0].gradient;
    for (std::size_t i = 0; i < m; ++i) linalg::axpy(lam[i], ev[i + 1].gradient, rd);
    std::vector<double> rp(m), rc(m);
    double barrier_err = linalg::norm_inf(rd);
    for (std::size_t i = 0; i < m; ++i) {
      rp[i] = ev[i + 1].value + z[i];
      rc[i] = lam[i] * z[i] - mu;
      barrier_err = std::max({barrier_err, std::abs(rp[i]), std::abs(rc[i])});
    }

    // Approximate KKT conditions at the current point with the current multipliers.
    const double r = linalg::norm2(linalg::subtract(x, model.td.center));
    const double slack = kkt_factor * std::pow(r, model.q + 1);
    bool done = r > 0.0 && linalg::norm2(rd) <= tol.eta1 * std::pow(r, stat_power);
    for (std::size_t i = 0; i < m && done; ++i) {
      const double si = ev[i + 1].value;
      if (std::abs(lam[i] * si) > tol.eta2 * slack || std::max(si, 0.0) > tol.eta3 * slack) {
        done = false;
      }
    }
    if (done) {
      sol.status = SubproblemStatus::kConverged;
      break;
    }
    if (iter >= kMaxIters) break;

    if (barrier_err <= 10.0 * mu && mu > kMuFloor) {
      mu = std::max(kMuFloor, std::min(0.2 * mu, std::pow(mu, 1.5)));
      for (std::size_t i = 0; i < m; ++i) rc[i] = lam[i] * z[i] - mu;
    }

    // Condensed Newton system (W + J^T Z^-1 Lambda J) dx = rhs.
    SymMatrix K = ev[0].hessian;
    for (std::size_t i = 0; i < m; ++i) {
      K.add_scaled(ev[i + 1].hessian, lam[i]);
    }
    SymMatrix W = K;
    linalg::Vector rhs = rd;
    for (auto& v : rhs) v = -v;
    for (std::size_t i = 0; i < m; ++i) {
      K.add_outer(ev[i + 1].gradient, lam[i] / z[i]);
      linalg::axpy(-(lam[i] * rp[i] - rc[i]) / z[i], ev[i + 1].gradient, rhs);
    }
    std::optional<linalg::CholFactor> f = linalg::cholesky(K);
    double delta = 0.0;
    if (!f) {
      const double scale = std::max(1.0, K.max_abs_diagonal());
      delta = delta_prev > 0.0 ? std::max(1e-12 * scale, delta_prev / 3.0) : 1e-8 * scale;
      for (int t = 0; t < 60 && !f; ++t, delta *= 10.0) {
        SymMatrix shifted = K;
        shifted.add_identity(delta);
        f = linalg::cholesky(shifted);
        if (f) break;
      }
      if (!f) break;
    }
    delta_prev = delta;
    const linalg::Vector dx = f->solve(rhs);
    std::vector<double> dz(m), dl(m);
    for (std::size_t i = 0; i < m; ++i) {
      dz[i] = -rp[i] - linalg::dot(ev[i + 1].gradient, dx);
      dl[i] = (-rc[i] - lam[i] * dz[i]) / z[i];
    }

    const double tau = std::max(0.99, 1.0 - mu);
    double alpha_p = 1.0, alpha_d = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (dz[i] < 0.0) alpha_p = std::min(alpha_p, -tau * z[i] / dz[i]);
      if (dl[i] < 0.0) alpha_d = std::min(alpha_d, -tau * lam[i] / dl[i]);
    }

    double lam_max = 0.0;
    for (std::size_t i = 0; i < m; ++i) lam_max = std::max(lam_max, std::abs(lam[i] + dl[i]));
    nu = std::max(nu, 1.1 * lam_max);
    auto merit = [&](std::span<const double> xx, std::span<const double> zz) {
      double val = model_value(model, 0, xx);
      for (std::size_t i = 0; i < m; ++i) {
        val += -mu * std::log(zz[i]) + nu * std::abs(model_value(model, i + 1, xx) + zz[i]);
      }
      return val;
    };
    double slope = linalg::dot(ev[0].gradient, dx);
    double rp_l1 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      slope -= mu * dz[i] / z[i];
      rp_l1 += std::abs(rp[i]);
    }
    slope -= nu * rp_l1;

    const double phi0 = merit(x, z);
    double alpha = alpha_p;
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
      linalg::Vector xt = x;
      linalg::axpy(alpha, dx, xt);
      std::vector<double> zt(m);
      for (std::size_t i = 0; i < m; ++i) zt[i] = z[i] + alpha * dz[i];
      const double phi = merit(xt, zt);
      if (phi <= phi0 + 1e-4 * alpha * std::min(slope, 0.0)) {
        x = std::move(xt);
        z = std::move(zt);
        moved = true;
        break;
      }
    }
    if (!moved) break;
    for (std::size_t i = 0; i < m; ++i) lam[i] = std::max(lam[i] + alpha_d * dl[i], 1e-300);
    // Keep slacks consistent with strictly satisfied constraints.
    for (std::size_t i = 0; i < m; ++i) {
      const double si = model_value(model, i + 1, x);
      if (si < 0.0) z[i] = std::max(z[i], -si);
    }
  }

  sol.dual_iters = iter;
  sol.x_next = x;
  sol.u = lam;
  sol.step_norm = linalg::norm2(linalg::subtract(x, model.td.center));
  sol.w = 0.0;
  sol.gap = std::numeric_limits<double>::quiet_NaN();
  sol.beta = std::numeric_limits<double>::quiet_NaN();
  sol.primal_value = theta(model, sol.x_next, sol.u);
  sol.model_constraint_values.resize(m);
  for (std::size_t i = 1; i <= m; ++i) {
    sol.model_constraint_values[i - 1] = model_value(model, i, sol.x_next);
  }
  return sol;
}

}  // namespace mta
