#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mta/mta.hpp"

namespace mta {

enum class RateMetric {
  kKktMin,  // running minimum of kkt_measure
  kFGap,    // F(x_k) - F*
};

const char* to_string(RateMetric m);
RateMetric rate_metric_from_string(const std::string& s);

struct RateWindow {
  int k_min = 1;
  int k_max = 1 << 30;
};

struct RateReport {
  RateMetric metric = RateMetric::kKktMin;
  int p = 2;
  int q = 2;
  int k_first = 0;  // window actually fitted, after saturation clipping
  int k_last = 0;
  int points = 0;
  double fitted_slope = 0.0;
  double theory_slope = 0.0;
  // The metric fell to its floor before the requested window held 10 points.
  // The fit then covers every pre-floor point from k = 1 instead.
  bool saturated = false;
  int saturated_at = -1;  // first k at or below the floor
  std::optional<double> bound_constant;
  std::vector<char> bound_flags;  // bound_flags[k-1] for k = 1..K

  bool bound_holds() const;
};

nlohmann::json rate_report_to_json(const RateReport& r);

// Least-squares slope of log(metric) against log(k), k >= 1. KktMin uses
// min_{j<=k} M(x_j); FGap needs fstar. The first k where the metric is <=
// floor ends the usable data (floor < 0 selects default_rate_floor). Throws
// std::invalid_argument when FGap lacks fstar, when the window holds fewer
// than 10 usable points without the metric having saturated, or when fewer
// than 2 usable points exist at all.
// theory_slope is -min(p/(p+1), q/(q+1)) for KktMin and -min(p, q) for FGap.
RateReport fit_rate(const MtaTrace& trace, RateMetric metric, RateWindow window,
                    std::optional<double> fstar = std::nullopt, double floor = -1.0);

// Default floors: 1e-8 for the KKT measure (the dual tolerances leave noise
// of about 1e-9 there) and 1e-12 (1 + |F*|) for the value gap.
double default_rate_floor(RateMetric metric, std::optional<double> fstar);

// Sets bound_constant and the per-k flags metric_k <= C / k^{-theory_slope}.
void attach_bound(RateReport& report, const MtaTrace& trace, double constant,
                  std::optional<double> fstar = std::nullopt);

// Trace quantities that stand in for the existential constants of the rate
// bounds: C_u = max |u^k|, D = max_k |x_k - x_best| with x_best the iterate
// of smallest F, and the observed drop F(x_0) - min_k F(x_k).
struct ObservedConstants {
  double C_u = 0.0;
  double D = 0.0;
  double f_drop = 0.0;
};
// Needs stored iterates; throws std::invalid_argument otherwise.
ObservedConstants observe_constants(const MtaTrace& trace);

// C1 = (L_p + M_p)/p!
double rate_C1(const ProblemInstance& inst, const MtaConfig& cfg);
// C2 = (C_u sum(M_q + L_q) + M)/q! + (C_u max(M_q + L_q)/(q+1)! + eta2/(q+1)!)^{q/(q+1)}
double rate_C2(const ProblemInstance& inst, const MtaConfig& cfg, double C_u);
// Constant C of the nonconvex bound min_{j<=k} M(x_j) <= C / k^{min(p/(p+1), q/(q+1))}.
double nonconvex_rate_constant(const ProblemInstance& inst, const MtaConfig& cfg,
                               const ObservedConstants& obs);
// 2 max((p+1)^{p+1}, (q+1)^{q+1}) (D1 (2D)^{p+1} + D2 (2D)^{q+1}) with
// D1 = (M_p + L_p)/(p+1)! and D2 = (M + C_u sum(M_q + L_q))/(q+1)!.
double convex_rate_constant(const ProblemInstance& inst, const MtaConfig& cfg,
                            const ObservedConstants& obs);
// C1 r^p + eta1 r^{min(p,q)} + C2 r^q: bound on M(x_{k+1}) for a step of length r.
double step_kkt_bound(const ProblemInstance& inst, const MtaConfig& cfg, double C_u, double r);

struct LinearRateCheck {
  double ratio_max = 0.0;  // NaN when no ratio is left after burn-in
  bool flag = true;        // ratio_max < 1 - 1e-3, vacuously true without ratios
  int truncated_at = -1;   // first k whose gap fell below 1e-14, or -1
  std::vector<double> ratios;  // (F_{k+1} - F*)/(F_k - F*) for k >= burn_in
};

LinearRateCheck check_linear_rate(std::span<const double> F, double fstar, int burn_in = 5);
LinearRateCheck check_linear_rate(const MtaTrace& trace, double fstar, int burn_in = 5);

nlohmann::json linear_rate_to_json(const LinearRateCheck& c);

}  // namespace mta
