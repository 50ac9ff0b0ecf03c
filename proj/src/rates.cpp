#include "mta/rates.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mta {

using nlohmann::json;

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double theory_slope(RateMetric metric, int p, int q) {
  if (metric == RateMetric::kKktMin) {
    return -std::min(static_cast<double>(p) / (p + 1), static_cast<double>(q) / (q + 1));
  }
  return -static_cast<double>(std::min(p, q));
}

// metric value per trace row k >= 1 (index k - 1).
std::vector<double> metric_series(const MtaTrace& trace, RateMetric metric,
                                  std::optional<double> fstar) {
  std::vector<double> out;
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    const TraceRow& row = trace.rows[k];
    if (metric == RateMetric::kKktMin) {
      running = std::min(running, row.kkt_measure);
      out.push_back(running);
    } else {
      out.push_back(row.F - *fstar);
    }
  }
  return out;
}

double slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

double sum_mq_lq(const ProblemInstance& inst, const MtaConfig& cfg) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.m(); ++i) s += cfg.M_q.at(i) + inst.lipschitz_for_order(i + 1, cfg.q);
  return s;
}

double max_mq_lq(const ProblemInstance& inst, const MtaConfig& cfg) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.m(); ++i) {
    s = std::max(s, cfg.M_q.at(i) + inst.lipschitz_for_order(i + 1, cfg.q));
  }
  return s;
}

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

const char* to_string(RateMetric m) { return m == RateMetric::kKktMin ? "KktMin" : "FGap"; }

RateMetric rate_metric_from_string(const std::string& s) {
  if (s == "KktMin") return RateMetric::kKktMin;
  if (s == "FGap") return RateMetric::kFGap;
  throw std::invalid_argument("metric must be KktMin or FGap, got " + s);
}

bool RateReport::bound_holds() const {
  return std::all_of(bound_flags.begin(), bound_flags.end(), [](char f) { return f != 0; });
}

double default_rate_floor(RateMetric metric, std::optional<double> fstar) {
  if (metric == RateMetric::kKktMin) return 1e-8;
  return 1e-12 * (1.0 + std::abs(fstar.value_or(0.0)));
}

RateReport fit_rate(const MtaTrace& trace, RateMetric metric, RateWindow window,
                    std::optional<double> fstar, double floor) {
  if (metric == RateMetric::kFGap && !fstar) throw std::invalid_argument("FGap needs a reference F*");
  if (window.k_min < 1 || window.k_max < window.k_min) throw std::invalid_argument("bad fit window");
  if (floor < 0.0) floor = default_rate_floor(metric, fstar);

  RateReport rep;
  rep.metric = metric;
  rep.p = trace.p;
  rep.q = trace.q;
  rep.theory_slope = theory_slope(metric, trace.p, trace.q);

  const std::vector<double> series = metric_series(trace, metric, fstar);
  std::size_t usable = series.size();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!(series[i] > floor)) {
      usable = i;
      rep.saturated_at = static_cast<int>(i + 1);
      break;
    }
  }
  auto fit_range = [&](int k_first, int k_last) {
    std::vector<double> xs, ys;
    for (int k = k_first; k <= k_last; ++k) {
      xs.push_back(std::log(static_cast<double>(k)));
      ys.push_back(std::log(series[k - 1]));
    }
    rep.k_first = k_first;
    rep.k_last = k_last;
    rep.points = static_cast<int>(xs.size());
    rep.fitted_slope = slope(xs, ys);
  };

  const int last = static_cast<int>(usable);
  const int lo = window.k_min;
  const int hi = std::min(window.k_max, last);
  if (hi - lo + 1 >= 10) {
    fit_range(lo, hi);
    return rep;
  }
  if (rep.saturated_at < 0) {
    throw std::invalid_argument(fmt::format(
        "fit window [{}, {}] holds fewer than 10 points of a {}-row trace", window.k_min,
        window.k_max, trace.rows.size()));
  }
  if (last < 2) {
    throw std::invalid_argument(
        fmt::format("metric reaches its floor {:.3g} at k = {}; nothing left to fit", floor,
                    rep.saturated_at));
  }
  rep.saturated = true;
  fit_range(1, last);
  return rep;
}

void attach_bound(RateReport& report, const MtaTrace& trace, double constant,
                  std::optional<double> fstar) {
  if (report.metric == RateMetric::kFGap && !fstar) throw std::invalid_argument("FGap needs a reference F*");
  const std::vector<double> series = metric_series(trace, report.metric, fstar);
  report.bound_constant = constant;
  report.bound_flags.clear();
  const double expo = -report.theory_slope;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    report.bound_flags.push_back(series[i] <= constant / std::pow(k, expo) ? 1 : 0);
  }
}

json rate_report_to_json(const RateReport& r) {
  json j;
  j["metric"] = to_string(r.metric);
  j["p"] = r.p;
  j["q"] = r.q;
  j["k_first"] = r.k_first;
  j["k_last"] = r.k_last;
  j["points"] = r.points;
  j["fitted_slope"] = real_or_null(r.fitted_slope);
  j["theory_slope"] = r.theory_slope;
  j["saturated"] = r.saturated;
  j["saturated_at"] = r.saturated_at;
  j["bound_constant"] = r.bound_constant ? real_or_null(*r.bound_constant) : json(nullptr);
  std::vector<bool> flags(r.bound_flags.begin(), r.bound_flags.end());
  j["bound_flags"] = flags;
  j["bound_holds"] = r.bound_holds();
  return j;
}

ObservedConstants observe_constants(const MtaTrace& trace) {
  if (trace.rows.empty()) throw std::invalid_argument("empty trace");
  std::size_t best = 0;
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    if (trace.rows[k].x.empty()) throw std::invalid_argument("trace has no stored iterates");
    if (trace.rows[k].F < trace.rows[best].F) best = k;
  }
  ObservedConstants obs;
  obs.C_u = trace.max_mult_norm();
  for (const auto& row : trace.rows) {
    obs.D = std::max(obs.D, linalg::norm2(linalg::subtract(row.x, trace.rows[best].x)));
  }
  obs.f_drop = trace.rows.front().F - trace.rows[best].F;
  return obs;
}

double rate_C1(const ProblemInstance& inst, const MtaConfig& cfg) {
  return (inst.lipschitz_for_order(0, cfg.p) + cfg.M_p) / factorial(cfg.p);
}

double rate_C2(const ProblemInstance& inst, const MtaConfig& cfg, double C_u) {
  const int q = cfg.q;
  const double first = (C_u * sum_mq_lq(inst, cfg) + cfg.M) / factorial(q);
  const double inner = (C_u * max_mq_lq(inst, cfg) + cfg.dual.eta2) / factorial(q + 1);
  return first + std::pow(inner, static_cast<double>(q) / (q + 1));
}

double nonconvex_rate_constant(const ProblemInstance& inst, const MtaConfig& cfg,
                               const ObservedConstants& obs) {
  const int p = cfg.p, q = cfg.q;
  const double C1 = rate_C1(inst, cfg);
  const double C2 = rate_C2(inst, cfg, obs.C_u);
  const double eta1 = cfg.dual.eta1;
  const double two_d = 2.0 * obs.D;
  const double eq = static_cast<double>(q) / (q + 1);
  const double ep = static_cast<double>(p) / (p + 1);
  const double a = std::pow(factorial(q + 1), eq) * (C1 * std::pow(two_d, p - q) + eta1 + C2) *
                   std::pow(obs.f_drop, eq) / std::pow(cfg.M, eq);
  const double b = std::pow(factorial(p + 1), ep) * (C1 + eta1 + C2 * std::pow(two_d, q - p)) *
                   std::pow(obs.f_drop, ep) /
                   std::pow(cfg.M_p - inst.lipschitz_for_order(0, p), ep);
  return std::max(a, b);
}

double convex_rate_constant(const ProblemInstance& inst, const MtaConfig& cfg,
                            const ObservedConstants& obs) {
  const int p = cfg.p, q = cfg.q;
  const double D1 = (cfg.M_p + inst.lipschitz_for_order(0, p)) / factorial(p + 1);
  const double D2 = (cfg.M + obs.C_u * sum_mq_lq(inst, cfg)) / factorial(q + 1);
  const double two_d = 2.0 * obs.D;
  const double lead = std::max(std::pow(p + 1.0, p + 1), std::pow(q + 1.0, q + 1));
  return 2.0 * lead * (D1 * std::pow(two_d, p + 1) + D2 * std::pow(two_d, q + 1));
}

double step_kkt_bound(const ProblemInstance& inst, const MtaConfig& cfg, double C_u, double r) {
  return rate_C1(inst, cfg) * std::pow(r, cfg.p) + cfg.dual.eta1 * std::pow(r, std::min(cfg.p, cfg.q)) +
         rate_C2(inst, cfg, C_u) * std::pow(r, cfg.q);
}

LinearRateCheck check_linear_rate(std::span<const double> F, double fstar, int burn_in) {
  constexpr double kGapFloor = 1e-14;
  LinearRateCheck out;
  std::size_t len = F.size();
  for (std::size_t k = 0; k < F.size(); ++k) {
    if (F[k] - fstar < kGapFloor) {
      len = k;
      out.truncated_at = static_cast<int>(k);
      break;
    }
  }
  out.ratio_max = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = static_cast<std::size_t>(std::max(burn_in, 0)); k + 1 < len; ++k) {
    const double ratio = (F[k + 1] - fstar) / (F[k] - fstar);
    out.ratios.push_back(ratio);
    if (!(ratio <= out.ratio_max)) out.ratio_max = ratio;
  }
  out.flag = out.ratios.empty() || out.ratio_max < 1.0 - 1e-3;
  return out;
}

LinearRateCheck check_linear_rate(const MtaTrace& trace, double fstar, int burn_in) {
  std::vector<double> F;
  for (const auto& row : trace.rows) F.push_back(row.F);
  return check_linear_rate(F, fstar, burn_in);
}

json linear_rate_to_json(const LinearRateCheck& c) {
  json j;
  j["ratio_max"] = real_or_null(c.ratio_max);
  j["flag"] = c.flag;
  j["truncated_at"] = c.truncated_at;
  json ratios = json::array();
  for (double r : c.ratios) ratios.push_back(real_or_null(r));
  j["ratios"] = ratios;
  return j;
}

}  // namespace mta
