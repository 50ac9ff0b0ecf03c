#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mta/problem.hpp"
#include "mta/subproblem.hpp"

namespace mta {

enum class Mode { kFixed, kAdaptive };

struct StopCriteria {
  double f_gap_tol = 1e-3;      // used when a reference F* is supplied
  double violation_tol = 1e-3;
  int max_outer_iters = 1000;
  double step_norm_tol = 1e-10;  // used without a reference
  double kkt_tol = 1e-4;         // used without a reference
};

struct MtaConfig {
  int p = 2;
  int q = 2;
  Mode mode = Mode::kFixed;

  // Fixed mode.
  double M_p = 0.0;
  double M = 0.0;
  std::vector<double> M_q;

  // Adaptive mode. M above is shared by both modes.
  double M_p0 = 0.0;
  std::vector<double> M_q0;
  double R_p = 0.0;
  int max_doublings = 60;

  DualTolerances dual;  // carries eta1, eta2, eta3
  StopCriteria stop;
  bool warm_start = false;      // start each dual solve from the previous u
  bool store_iterates = true;   // keep x_k and u^k in the trace
};

// Throws std::invalid_argument when cfg does not satisfy the parameter
// requirements of its mode for this instance.
void validate_config(const MtaConfig& cfg, const ProblemInstance& inst);

// Parameters derived from the declared Lipschitz bounds. Fixed mode uses
// M_p = 1.1 L_p and M_q^i = 1.1 L_q^i + eta3, scaled by p (resp. q) when every
// function is declared convex so the subproblem stays convex. M = 0.01 times
// the objective's order-q Lipschitz bound.
MtaConfig default_fixed_config(const ProblemInstance& inst, int p, int q);
// Adaptive mode starting from 1/64 of the declared bounds, R_p = 0.1 L_p.
MtaConfig default_adaptive_config(const ProblemInstance& inst, int p, int q);

// max(|grad F_0 + sum u_i grad F_i|, max_i (-u_i F_i)_+^{q/(q+1)})
double kkt_measure(const ProblemInstance& inst, std::span<const double> x,
                   std::span<const double> u, int q);

enum class StepStatus {
  kAccepted,
  kStationary,  // the dual solver found x_k itself (r below 1e-14)
  kStalled,     // descent or feasibility failed after all retries; x_next = x_k
};

struct StepParams {
  int p = 2;
  int q = 2;
  double M_p = 0.0;
  double M = 0.0;
  std::vector<double> M_q;
};

struct StepResult {
  Vector x_next;
  std::vector<double> u;
  double w = 0.0;
  double step_norm = 0.0;
  double gap = 0.0;
  int dual_iters = 0;  // summed over retries
  int retries = 0;
  bool local_solve = false;  // step came from the local fallback solver
  StepStatus status = StepStatus::kAccepted;
  SubproblemStatus dual_status = SubproblemStatus::kConverged;
};

// One MTA iteration. The model decrease s_0(x_next) <= F(x_k) and true
// feasibility F_i(x_next) <= violation_tol are checked. When the dual solver
// does not return a certified, acceptable step, a local solve of the same
// model is tried; if neither passes, the dual gap tolerance is divided by 10
// and everything re-run, at most 3 times, before giving up with kStalled.
// Throws InfeasibleModelError when every dual attempt reported an empty model
// and the local solve failed as well.
StepResult mta_step(const ProblemInstance& inst, std::span<const double> x_k, const StepParams& params,
                    const DualTolerances& dual, double violation_tol,
                    const std::vector<double>* warm_u = nullptr);

enum class RunStatus { kConverged, kMaxIters, kInfeasibleModel };

const char* to_string(RunStatus s);

struct TraceRow {
  int k = 0;
  double F = 0.0;
  double max_violation = 0.0;
  double step_norm = 0.0;
  double kkt_measure = 0.0;
  double mult_norm = 0.0;
  int dual_iters = 0;
  int doublings = 0;
  double wall_ms = 0.0;
  // F(x_{k-1}) - F(x_k) minus the guaranteed decrease for the parameters that
  // produced x_k. Zero on row 0.
  double descent_slack = 0.0;
  double M_p = 0.0;  // objective parameter used for the step into x_k
  Vector x;                // empty unless store_iterates
  std::vector<double> u;   // empty unless store_iterates
};

struct MtaTrace {
  int p = 2;
  int q = 2;
  Mode mode = Mode::kFixed;
  std::vector<TraceRow> rows;  // row 0 is x_0
  RunStatus status = RunStatus::kMaxIters;
  std::string message;
  double total_ms = 0.0;

  const TraceRow& last() const { return rows.back(); }
  int iterations() const { return static_cast<int>(rows.size()) - 1; }
  double max_mult_norm() const;
  bool f_nonincreasing() const;
};

// Fixed-parameter MTA. With a reference F*, stops once F - F* <= f_gap_tol and the
// violation is <= violation_tol; otherwise once kkt_measure <= kkt_tol or the
// step norm drops to step_norm_tol.
MtaTrace run_fixed(const ProblemInstance& inst, const MtaConfig& cfg,
                   std::optional<double> reference_fstar = std::nullopt);

// Adaptive MTA: parameters doubled until the step is accepted, then relaxed.
// Same stopping rules as run_fixed.
MtaTrace run_adaptive(const ProblemInstance& inst, const MtaConfig& cfg,
                      std::optional<double> reference_fstar = std::nullopt);

MtaTrace run(const ProblemInstance& inst, const MtaConfig& cfg,
             std::optional<double> reference_fstar = std::nullopt);

// Largest number of doublings one adaptive outer iteration may need.
int adaptive_doubling_bound(const ProblemInstance& inst, const MtaConfig& cfg);

struct LyapunovDiag {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double M_required = 0.0;
  double C_u = 0.0;            // running max of |u^k| over the trace
  std::vector<double> xi;      // xi[k-1] = xi_p(x_k; u^k; x_{k-1}), k >= 1
  std::vector<int> failures;   // k >= 2 where xi did not strictly decrease
};

// Needs a fixed-mode trace with stored iterates; throws std::invalid_argument
// otherwise.
LyapunovDiag lyapunov_diag(const MtaTrace& trace, const ProblemInstance& inst,
                           const MtaConfig& cfg);

// M = 3 C_u |M_q + L_q| + 2 m eta2, the value that makes xi_p decrease.
double lyapunov_required_M(const ProblemInstance& inst, const MtaConfig& cfg, double C_u);

}  // namespace mta
