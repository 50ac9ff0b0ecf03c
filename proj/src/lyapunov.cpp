#include <cmath>

#include "mta/mta.hpp"

namespace mta {

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// |M_q + L_q| over the constraints.
double mq_plus_lq_norm(const ProblemInstance& inst, const MtaConfig& cfg) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.m(); ++i) {
    const double v = cfg.M_q.at(i) + inst.lipschitz_for_order(i + 1, cfg.q);
    s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace

double lyapunov_required_M(const ProblemInstance& inst, const MtaConfig& cfg, double C_u) {
  return 3.0 * C_u * mq_plus_lq_norm(inst, cfg) +
         2.0 * static_cast<double>(inst.m()) * cfg.dual.eta2;
}

LyapunovDiag lyapunov_diag(const MtaTrace& trace, const ProblemInstance& inst,
                           const MtaConfig& cfg) {
  if (cfg.mode != Mode::kFixed) throw std::invalid_argument("lyapunov_diag needs a fixed-mode config");
  for (const auto& row : trace.rows) {
    if (row.x.size() != inst.n() || row.u.size() != inst.m()) {
      throw std::invalid_argument("lyapunov_diag needs a trace with stored iterates");
    }
  }
  LyapunovDiag diag;
  diag.C_u = trace.max_mult_norm();
  const double norm = mq_plus_lq_norm(inst, cfg);
  const double L_p = inst.lipschitz_for_order(0, cfg.p);
  diag.theta1 = 0.5 * (cfg.M_p - L_p);
  diag.theta2 = 2.0 * diag.C_u * norm + static_cast<double>(inst.m()) * cfg.dual.eta2;
  diag.M_required = lyapunov_required_M(inst, cfg, diag.C_u);

  const int p = cfg.p, q = cfg.q;
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    const TraceRow& row = trace.rows[k];
    double lagrangian = inst.value(0, row.x);
    for (std::size_t i = 1; i <= inst.m(); ++i) lagrangian += row.u[i - 1] * inst.value(i, row.x);
    const double r = linalg::norm2(linalg::subtract(row.x, trace.rows[k - 1].x));
    diag.xi.push_back(lagrangian + diag.theta1 / factorial(p + 1) * std::pow(r, p + 1) +
                      diag.theta2 / factorial(q + 1) * std::pow(r, q + 1));
  }
  for (std::size_t j = 1; j < diag.xi.size(); ++j) {
    if (!(diag.xi[j] < diag.xi[j - 1])) diag.failures.push_back(static_cast<int>(j + 1));
  }
  return diag;
}

}  // namespace mta
