#include "mta/mta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace mta {

namespace {

using Clock = std::chrono::steady_clock;

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool all_convex(const ProblemInstance& inst) {
  const auto& flags = inst.data().convex;
  return std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
}

// Guaranteed decrease F(x_k) - F(x_{k+1}) for a step of length r.
double guaranteed_decrease(int p, int q, double M_p, double L_p, double M, double r) {
  return (M_p - L_p) / factorial(p + 1) * std::pow(r, p + 1) +
         M / factorial(q + 1) * std::pow(r, q + 1);
}

class Runner {
 public:
  Runner(const ProblemInstance& inst, const MtaConfig& cfg, std::optional<double> fstar)
      : inst_(inst), cfg_(cfg), fstar_(fstar), start_(Clock::now()) {
    trace_.p = cfg.p;
    trace_.q = cfg.q;
    trace_.mode = cfg.mode;
  }

  void push_row(std::span<const double> x, const std::vector<double>& u, double step_norm,
                int dual_iters, int doublings, double descent_slack, double M_p) {
    TraceRow row;
    row.k = static_cast<int>(trace_.rows.size());
    row.F = inst_.value(0, x);
    row.max_violation = max_violation(inst_, x);
    row.step_norm = step_norm;
    row.kkt_measure = kkt_measure(inst_, x, u, cfg_.q);
    row.mult_norm = u.empty() ? 0.0 : linalg::norm2(u);
    row.dual_iters = dual_iters;
    row.doublings = doublings;
    row.wall_ms = elapsed_ms(start_);
    row.descent_slack = descent_slack;
    row.M_p = M_p;
    if (cfg_.store_iterates) {
      row.x.assign(x.begin(), x.end());
      row.u = u;
    }
    trace_.rows.push_back(std::move(row));
  }

  // True once the stopping rule is met by the last row.
  bool should_stop() const {
    const TraceRow& row = trace_.last();
    if (fstar_) {
      return row.F - *fstar_ <= cfg_.stop.f_gap_tol && row.max_violation <= cfg_.stop.violation_tol;
    }
    if (row.kkt_measure <= cfg_.stop.kkt_tol) return true;
    return row.k >= 1 && row.step_norm <= cfg_.stop.step_norm_tol;
  }

  MtaTrace finish(RunStatus status, std::string message) {
    trace_.status = status;
    trace_.message = std::move(message);
    trace_.total_ms = elapsed_ms(start_);
    return std::move(trace_);
  }

  const MtaTrace& trace() const { return trace_; }

 private:
  const ProblemInstance& inst_;
  const MtaConfig& cfg_;
  std::optional<double> fstar_;
  Clock::time_point start_;
  MtaTrace trace_;
};

}  // namespace

void validate_config(const MtaConfig& cfg, const ProblemInstance& inst) {
  const bool supported = (cfg.p == 1 && cfg.q == 1) || (cfg.p == 2 && cfg.q == 1) ||
                         (cfg.p == 2 && cfg.q == 2);
  if (!supported) throw std::invalid_argument(fmt::format("unsupported (p, q) = ({}, {})", cfg.p, cfg.q));
  if (!(cfg.M > 0.0)) throw std::invalid_argument("M must be positive");
  const std::size_t m = inst.m();
  if (cfg.mode == Mode::kFixed) {
    const double L_p = inst.lipschitz_for_order(0, cfg.p);
    if (!(cfg.M_p > L_p)) {
      throw std::invalid_argument(fmt::format("M_p = {} must exceed L_p = {}", cfg.M_p, L_p));
    }
    if (cfg.M_q.size() != m) throw std::invalid_argument("M_q needs one entry per constraint");
    for (std::size_t i = 0; i < m; ++i) {
      const double L_q = inst.lipschitz_for_order(i + 1, cfg.q);
      if (!(cfg.M_q[i] > L_q)) {
        throw std::invalid_argument(
            fmt::format("M_q[{}] = {} must exceed L_q = {}", i, cfg.M_q[i], L_q));
      }
    }
  } else {
    if (!(cfg.R_p > 0.0) || !(cfg.M_p0 > 0.0)) {
      throw std::invalid_argument("adaptive mode needs R_p > 0 and M_p0 > 0");
    }
    if (cfg.M_q0.size() != m) throw std::invalid_argument("M_q0 needs one entry per constraint");
    for (double v : cfg.M_q0) {
      if (!(v > 0.0)) throw std::invalid_argument("M_q0 entries must be positive");
    }
    if (cfg.max_doublings < 1) throw std::invalid_argument("max_doublings must be positive");
  }
  if (cfg.stop.max_outer_iters < 0) throw std::invalid_argument("max_outer_iters must be >= 0");
  if (cfg.dual.max_iters < 1) throw std::invalid_argument("dual max_iters must be positive");
}

MtaConfig default_fixed_config(const ProblemInstance& inst, int p, int q) {
  MtaConfig cfg;
  cfg.p = p;
  cfg.q = q;
  cfg.mode = Mode::kFixed;
  const bool convex = all_convex(inst);
  cfg.M_p = 1.1 * (convex ? p : 1) * inst.lipschitz_for_order(0, p);
  cfg.M = 0.01 * inst.lipschitz_for_order(0, q);
  cfg.M_q.resize(inst.m());
  for (std::size_t i = 0; i < inst.m(); ++i) {
    cfg.M_q[i] = 1.1 * (convex ? q : 1) * inst.lipschitz_for_order(i + 1, q) + cfg.dual.eta3;
  }
  return cfg;
}

MtaConfig default_adaptive_config(const ProblemInstance& inst, int p, int q) {
  MtaConfig cfg = default_fixed_config(inst, p, q);
  cfg.mode = Mode::kAdaptive;
  const double L_p = inst.lipschitz_for_order(0, p);
  cfg.M_p0 = L_p / 64.0;
  cfg.R_p = 0.1 * L_p;
  cfg.M_q0.resize(inst.m());
  for (std::size_t i = 0; i < inst.m(); ++i) {
    cfg.M_q0[i] = inst.lipschitz_for_order(i + 1, q) / 64.0;
  }
  return cfg;
}

double kkt_measure(const ProblemInstance& inst, std::span<const double> x,
                   std::span<const double> u, int q) {
  if (u.size() != inst.m()) throw std::invalid_argument("kkt_measure: need m multipliers");
  Vector grad = inst.gradient(0, x);
  double comp = 0.0;
  const double expo = static_cast<double>(q) / (q + 1);
  for (std::size_t i = 1; i <= inst.m(); ++i) {
    const double ui = u[i - 1];
    if (ui == 0.0) continue;
    const Evaluation e = inst.evaluate(i, x, 1);
    linalg::axpy(ui, *e.gradient, grad);
    const double v = -ui * e.value;
    if (v > 0.0) comp = std::max(comp, std::pow(v, expo));
  }
  return std::max(linalg::norm2(grad), comp);
}

StepResult mta_step(const ProblemInstance& inst, std::span<const double> x_k, const StepParams& params,
                    const DualTolerances& dual, double violation_tol,
                    const std::vector<double>* warm_u) {
  const SubproblemModel model =
      build_model(inst, x_k, params.p, params.q, params.M_p, params.M, params.M_q);
  const double F_k = model.td.f[0];
  // Rounding guard for the model decrease test.
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(F_k));
  auto acceptable = [&](const SubproblemSolution& sol) {
    if (!(model_value(model, 0, sol.x_next) <= F_k + slack)) return false;
    for (std::size_t i = 1; i <= inst.m(); ++i) {
      if (!(inst.value(i, sol.x_next) <= violation_tol)) return false;
    }
    return true;
  };

  // Converged, or stopped by rounding with a closed gap and a model-feasible
  // point (only complementarity or stationarity short of the targets).
  auto nearly_certified = [&](const SubproblemSolution& sol, const DualTolerances& t) {
    if (sol.status == SubproblemStatus::kConverged) return true;
    if (!(sol.gap <= t.gap_tol * (1.0 + std::abs(sol.beta)))) return false;
    const double feas = t.eta3 * std::pow(sol.step_norm, params.q + 1) / factorial(params.q + 1);
    for (double s_i : sol.model_constraint_values) {
      if (s_i > feas) return false;
    }
    return true;
  };

  StepResult res;
  auto take = [&](const SubproblemSolution& sol, StepStatus status) {
    res.x_next = sol.x_next;
    res.u = sol.u;
    res.w = sol.w;
    res.gap = sol.gap;
    res.dual_status = sol.status;
    res.status = status;
    res.step_norm = status == StepStatus::kAccepted
                        ? linalg::norm2(linalg::subtract(sol.x_next, x_k))
                        : 0.0;
    if (status != StepStatus::kAccepted) res.x_next.assign(x_k.begin(), x_k.end());
  };

  DualTolerances tol = dual;
  constexpr int kMaxRetries = 3;
  std::optional<std::string> infeasible_model;
  for (int attempt = 0;; ++attempt) {
    res.retries = attempt;
    std::optional<SubproblemSolution> sol;
    try {
      sol = solve_dual(model, tol, warm_u);
      res.dual_iters += sol->dual_iters;
    } catch (const InfeasibleModelError& e) {
      infeasible_model = e.what();
    }
    if (sol && sol->status == SubproblemStatus::kDegenerate) {
      take(*sol, StepStatus::kStationary);
      return res;
    }
    if (sol && nearly_certified(*sol, tol) && acceptable(*sol)) {
      take(*sol, StepStatus::kAccepted);
      return res;
    }
    // The dual could not certify a step: its relaxation may have a gap. Look
    // for a local KKT point of the model instead.
    const SubproblemSolution local = solve_local(model, tol, x_k, sol ? &sol->u : nullptr);
    res.dual_iters += local.dual_iters;
    const bool local_ok = acceptable(local);
    if (local_ok && local.status == SubproblemStatus::kConverged) {
      take(local, StepStatus::kAccepted);
      res.local_solve = true;
      return res;
    }
    if (sol && acceptable(*sol)) {
      take(*sol, StepStatus::kAccepted);
      return res;
    }
    if (local_ok) {
      take(local, StepStatus::kAccepted);
      res.local_solve = true;
      return res;
    }
    if (attempt == kMaxRetries) {
      if (!sol && infeasible_model) throw InfeasibleModelError(*infeasible_model);
      take(sol ? *sol : local, StepStatus::kStalled);
      return res;
    }
    tol.gap_tol /= 10.0;
  }
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kConverged: return "Converged";
    case RunStatus::kMaxIters: return "MaxIters";
    case RunStatus::kInfeasibleModel: return "InfeasibleModel";
  }
  return "?";
}

double MtaTrace::max_mult_norm() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.mult_norm);
  return m;
}

bool MtaTrace::f_nonincreasing() const {
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].F > rows[k - 1].F) return false;
  }
  return true;
}

MtaTrace run_fixed(const ProblemInstance& inst, const MtaConfig& cfg,
                   std::optional<double> reference_fstar) {
  if (cfg.mode != Mode::kFixed) throw std::invalid_argument("run_fixed needs a fixed-mode config");
  validate_config(cfg, inst);
  if (max_violation(inst, inst.x0()) > 0.0) throw InfeasibleStartError("x0 is infeasible");

  const double L_p = inst.lipschitz_for_order(0, cfg.p);
  const StepParams params{cfg.p, cfg.q, cfg.M_p, cfg.M, cfg.M_q};
  Runner runner(inst, cfg, reference_fstar);
  Vector x = inst.x0();
  std::vector<double> u(inst.m(), 0.0);
  runner.push_row(x, u, 0.0, 0, 0, 0.0, cfg.M_p);

  for (int k = 0;; ++k) {
    if (runner.should_stop()) return runner.finish(RunStatus::kConverged, "stopping rule met");
    if (k >= cfg.stop.max_outer_iters) {
      return runner.finish(RunStatus::kMaxIters, "outer iteration budget exhausted");
    }
    StepResult step;
    try {
      step = mta_step(inst, x, params, cfg.dual, cfg.stop.violation_tol,
                      cfg.warm_start ? &u : nullptr);
    } catch (const InfeasibleModelError& e) {
      return runner.finish(RunStatus::kInfeasibleModel, e.what());
    }
    if (step.status == StepStatus::kStalled) {
      return runner.finish(RunStatus::kMaxIters, "descent could not be certified at x_k");
    }
    const double F_prev = runner.trace().last().F;
    const double F_next = inst.value(0, step.x_next);
    const double slack =
        F_prev - F_next - guaranteed_decrease(cfg.p, cfg.q, cfg.M_p, L_p, cfg.M, step.step_norm);
    x = step.x_next;
    u = step.u;
    runner.push_row(x, u, step.step_norm, step.dual_iters, 0, slack, cfg.M_p);
    if (step.status == StepStatus::kStationary) {
      return runner.finish(RunStatus::kConverged, "x_k is stationary for its model");
    }
  }
}

MtaTrace run_adaptive(const ProblemInstance& inst, const MtaConfig& cfg,
                      std::optional<double> reference_fstar) {
  if (cfg.mode != Mode::kAdaptive) {
    throw std::invalid_argument("run_adaptive needs an adaptive-mode config");
  }
  validate_config(cfg, inst);
  if (max_violation(inst, inst.x0()) > 0.0) throw InfeasibleStartError("x0 is infeasible");

  const std::size_t m = inst.m();
  const double L_p = inst.lipschitz_for_order(0, cfg.p);
  Runner runner(inst, cfg, reference_fstar);
  Vector x = inst.x0();
  std::vector<double> u(m, 0.0);
  runner.push_row(x, u, 0.0, 0, 0, 0.0, cfg.M_p0);

  double M_pk = cfg.M_p0;
  std::vector<double> M_qk = cfg.M_q0;
  const double cp = cfg.R_p / factorial(cfg.p + 1);
  const double cq = cfg.M / factorial(cfg.q + 1);

  for (int k = 0;; ++k) {
    if (runner.should_stop()) return runner.finish(RunStatus::kConverged, "stopping rule met");
    if (k >= cfg.stop.max_outer_iters) {
      return runner.finish(RunStatus::kMaxIters, "outer iteration budget exhausted");
    }
    const double F_k = runner.trace().last().F;
    int dual_iters = 0;
    bool accepted = false;
    bool stationary = false;
    StepResult step;
    StepParams params{cfg.p, cfg.q, 0.0, cfg.M, std::vector<double>(m)};
    int j = 0;
    for (; j <= cfg.max_doublings; ++j) {
      const double scale = std::ldexp(1.0, j);
      params.M_p = scale * M_pk;
      for (std::size_t i = 0; i < m; ++i) params.M_q[i] = scale * M_qk[i];
      try {
        // Feasibility is part of the acceptance test below, not a retry trigger.
        step = mta_step(inst, x, params, cfg.dual, std::numeric_limits<double>::infinity(),
                        cfg.warm_start ? &u : nullptr);
      } catch (const InfeasibleModelError&) {
        continue;
      }
      dual_iters += step.dual_iters;
      if (step.status == StepStatus::kStationary) {
        stationary = true;
        break;
      }
      if (step.status == StepStatus::kStalled) continue;
      const double F_next = inst.value(0, step.x_next);
      const double r = step.step_norm;
      const bool descent = cp * std::pow(r, cfg.p + 1) + cq * std::pow(r, cfg.q + 1) <= F_k - F_next;
      if (descent && max_violation(inst, step.x_next) <= 0.0) {
        accepted = true;
        break;
      }
    }
    if (stationary) {
      runner.push_row(x, step.u, 0.0, dual_iters, j, 0.0, params.M_p);
      return runner.finish(RunStatus::kConverged, "x_k is stationary for its model");
    }
    if (!accepted) {
      return runner.finish(RunStatus::kMaxIters, "doubling budget exhausted without acceptance");
    }
    const double F_next = inst.value(0, step.x_next);
    const double slack =
        F_k - F_next - guaranteed_decrease(cfg.p, cfg.q, cfg.R_p + L_p, L_p, cfg.M, step.step_norm);
    x = step.x_next;
    u = step.u;
    runner.push_row(x, u, step.step_norm, dual_iters, j, slack, params.M_p);
    const double half = std::ldexp(1.0, j - 1);
    M_pk = std::max(half * M_pk, cfg.M_p0);
    for (std::size_t i = 0; i < m; ++i) M_qk[i] = std::max(half * M_qk[i], cfg.M_q0[i]);
  }
}

MtaTrace run(const ProblemInstance& inst, const MtaConfig& cfg, std::optional<double> reference_fstar) {
  return cfg.mode == Mode::kFixed ? run_fixed(inst, cfg, reference_fstar)
                                  : run_adaptive(inst, cfg, reference_fstar);
}

int adaptive_doubling_bound(const ProblemInstance& inst, const MtaConfig& cfg) {
  const double L_p = inst.lipschitz_for_order(0, cfg.p);
  int bound = static_cast<int>(std::ceil(std::log2((cfg.R_p + L_p) / cfg.M_p0)));
  int worst_q = 0;
  for (std::size_t i = 0; i < inst.m(); ++i) {
    const double L_q = inst.lipschitz_for_order(i + 1, cfg.q);
    worst_q = std::max(worst_q,
                       static_cast<int>(std::ceil(std::log2((cfg.dual.eta3 + L_q) / cfg.M_q0[i]))));
  }
  return std::max(bound, 0) + worst_q + 2;
}

}  // namespace mta
