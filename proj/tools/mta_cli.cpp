// Command-line front end: generate, solve, bench, rates, diag.
//
// Exit codes: 0 success, 1 a gated property failed, 2 invalid input,
// 3 MaxIters, 4 InfeasibleModel, 5 infeasible x0.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mta/bench.hpp"
#include "mta/config_io.hpp"
#include "mta/instance_io.hpp"
#include "mta/mta.hpp"
#include "mta/rates.hpp"
#include "mta/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitGateFailed = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitMaxIters = 3;
constexpr int kExitInfeasibleModel = 4;
constexpr int kExitInfeasibleStart = 5;

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InvalidInput("no such file: " + path);
}

mta::ProblemInstance load_instance_checked(const std::string& path) {
  require_file(path);
  try {
    return mta::load_instance(path);
  } catch (const mta::InfeasibleStartError&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidInput(fmt::format("{}: {}", path, e.what()));
  }
}

mta::MtaConfig build_config(const mta::ProblemInstance& inst, int p, int q, bool adaptive,
                            const std::string& config_path) {
  mta::MtaConfig cfg = adaptive ? mta::default_adaptive_config(inst, p, q)
                                : mta::default_fixed_config(inst, p, q);
  if (!config_path.empty()) {
    require_file(config_path);
    try {
      mta::apply_config_json(mta::read_json_file(config_path), cfg, inst.m());
    } catch (const std::invalid_argument& e) {
      throw InvalidInput(e.what());
    }
  }
  try {
    mta::validate_config(cfg, inst);
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(e.what());
  }
  return cfg;
}

int exit_code(mta::RunStatus s) {
  switch (s) {
    case mta::RunStatus::kConverged: return 0;
    case mta::RunStatus::kMaxIters: return kExitMaxIters;
    case mta::RunStatus::kInfeasibleModel: return kExitInfeasibleModel;
  }
  return kExitMaxIters;
}

struct GenerateArgs {
  std::size_t n = 0, m = 0;
  std::uint64_t seed = 0;
  std::string family = "nonconvex";
  double sigma = 1.0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.n < 1) throw InvalidInput("--n must be at least 1");
  mta::ProblemInstance inst = [&] {
    if (a.family == "nonconvex") return mta::generate_benchmark(a.n, a.m, a.seed);
    if (a.family == "convex") return mta::generate_convex_benchmark(a.n, a.m, a.seed, 0.0);
    if (!(a.sigma > 0.0)) throw InvalidInput("--sigma must be positive for strongly-convex");
    return mta::generate_convex_benchmark(a.n, a.m, a.seed, a.sigma);
  }();
  mta::save_instance(inst, a.out);
  fmt::print("wrote {} (n = {}, m = {}, family {})\n", a.out, a.n, a.m, a.family);
  return 0;
}

struct SolveArgs {
  std::string instance, config, trace_out;
  int p = 2, q = 2;
  bool adaptive = false;
  std::optional<double> fstar;
};

int cmd_solve(const SolveArgs& a) {
  const mta::ProblemInstance inst = load_instance_checked(a.instance);
  const mta::MtaConfig cfg = build_config(inst, a.p, a.q, a.adaptive, a.config);
  const mta::MtaTrace trace = mta::run(inst, cfg, a.fstar);
  if (!a.trace_out.empty()) mta::save_trace_csv(trace, a.trace_out);
  const mta::TraceRow& last = trace.last();
  fmt::print("MTA({},{}) {}: {} ({})\n", a.p, a.q, a.adaptive ? "adaptive" : "fixed",
             mta::to_string(trace.status), trace.message);
  fmt::print("F = {:.6f}\nviolation = {:.6e}\nkkt_measure = {:.6e}\niters = {}\n", last.F,
             last.max_violation, last.kkt_measure, trace.iterations());
  return exit_code(trace.status);
}

struct BenchArgs {
  std::string plan, out_dir;
};

int cmd_bench(const BenchArgs& a) {
  require_file(a.plan);
  mta::ExperimentPlan plan;
  try {
    plan = mta::plan_from_json(mta::read_json_file(a.plan));
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(e.what());
  }
  const mta::PlanResult result = mta::run_plan(plan);
  mta::write_plan_outputs(result, a.out_dir);
  fmt::print("{:>4} {:>4} {:<10} {:>6} {:>12} {:>14} {:>8}\n", "n", "m", "method", "seeds",
             "median_iters", "median_wall_ms", "success");
  for (const auto& s : result.summary) {
    fmt::print("{:>4} {:>4} {:<10} {:>6} {:>12.6g} {:>14.6g} {:>8.6g}\n", s.n, s.m, s.method,
               s.seeds, s.median_iters, s.median_wall_ms, s.success_rate);
  }
  const mta::PlanGates& g = result.gates;
  fmt::print("invariants {} (worst descent slack {:.6e}, worst violation {:.6e})\n",
             g.invariants ? "PASS" : "FAIL", g.worst_descent_slack, g.worst_violation);
  fmt::print("reference {}\n", g.reference ? "PASS" : "FAIL");
  for (const auto& oc : g.orderings) {
    fmt::print("ordering ({},{}) {}: medians {:.6g} < {:.6g} < {:.6g}, seeds {}/{} and {}/{}\n",
               oc.n, oc.m, oc.pass ? "PASS" : "FAIL", oc.median_22, oc.median_21, oc.median_11,
               oc.seeds_22_below_21, oc.seeds, oc.seeds_21_below_11, oc.seeds);
  }
  fmt::print("failed runs {}\n", g.failed_runs);
  return g.all() ? 0 : kExitGateFailed;
}

struct RatesArgs {
  std::string trace, metric = "KktMin", report_out;
  std::optional<double> fstar, max_slope;
  int p = 2, q = 2;
  int k_min = 1, k_max = 1 << 30;
  bool linear = false;
  int burn_in = 5;
};

int cmd_rates(const RatesArgs& a) {
  require_file(a.trace);
  mta::RateMetric metric;
  mta::MtaTrace trace;
  try {
    metric = mta::rate_metric_from_string(a.metric);
    trace = mta::load_trace_csv(a.trace);
  } catch (const std::exception& e) {
    throw InvalidInput(e.what());
  }
  if (metric == mta::RateMetric::kFGap && !a.fstar) throw InvalidInput("--metric FGap needs --fstar");
  if (a.linear && !a.fstar) throw InvalidInput("--linear needs --fstar");
  trace.p = a.p;
  trace.q = a.q;
  mta::RateReport rep;
  try {
    rep = mta::fit_rate(trace, metric, {a.k_min, a.k_max}, a.fstar);
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(e.what());
  }
  bool pass = true;
  fmt::print("metric {} over k in [{}, {}] ({} points{})\n", mta::to_string(metric), rep.k_first,
             rep.k_last, rep.points, rep.saturated ? fmt::format(", saturated at k = {}", rep.saturated_at) : "");
  fmt::print("fitted slope {:.4f}\ntheory slope {:.4f}\n", rep.fitted_slope, rep.theory_slope);
  json out = {{"rate", mta::rate_report_to_json(rep)}};
  if (a.max_slope) {
    const bool ok = rep.fitted_slope <= *a.max_slope;
    fmt::print("slope gate <= {:.4f}: {}\n", *a.max_slope, ok ? "PASS" : "FAIL");
    pass = pass && ok;
  }
  if (a.linear) {
    const mta::LinearRateCheck lin = mta::check_linear_rate(trace, *a.fstar, a.burn_in);
    fmt::print("linear rate: max ratio {:.6f} after burn-in {}: {}\n", lin.ratio_max, a.burn_in,
               lin.flag ? "PASS" : "FAIL");
    out["linear"] = mta::linear_rate_to_json(lin);
    pass = pass && lin.flag;
  }
  if (!a.report_out.empty()) {
    std::ofstream f(a.report_out);
    if (!f) throw InvalidInput("cannot write " + a.report_out);
    f << out.dump(2) << '\n';
  }
  return pass ? 0 : kExitGateFailed;
}

struct DiagArgs {
  std::string instance, config;
  int p = 2, q = 2;
  bool adaptive = false;
};

// Runs one solve and reports the trajectory diagnostics: Lyapunov descent and
// step-length KKT bounds in fixed mode, doubling counts in adaptive mode.
int cmd_diag(const DiagArgs& a) {
  const mta::ProblemInstance inst = load_instance_checked(a.instance);
  mta::MtaConfig cfg = build_config(inst, a.p, a.q, a.adaptive, a.config);
  cfg.store_iterates = true;
  const mta::MtaTrace trace = mta::run(inst, cfg);
  json out;
  out["status"] = mta::to_string(trace.status);
  out["iters"] = trace.iterations();
  out["C_u"] = trace.max_mult_norm();
  out["f_nonincreasing"] = trace.f_nonincreasing();
  if (cfg.mode == mta::Mode::kFixed) {
    const mta::LyapunovDiag d = mta::lyapunov_diag(trace, inst, cfg);
    out["lyapunov"] = {{"theta1", d.theta1},
                       {"theta2", d.theta2},
                       {"M_required", d.M_required},
                       {"M", cfg.M},
                       {"failures", d.failures}};
    int bound_failures = 0;
    for (std::size_t k = 1; k < trace.rows.size(); ++k) {
      const double bound = mta::step_kkt_bound(inst, cfg, trace.max_mult_norm(), trace.rows[k].step_norm);
      if (trace.rows[k].kkt_measure > bound) ++bound_failures;
    }
    out["step_kkt_bound_failures"] = bound_failures;
  } else {
    int worst = 0;
    for (const auto& row : trace.rows) worst = std::max(worst, row.doublings);
    out["doublings"] = {{"max", worst}, {"bound", mta::adaptive_doubling_bound(inst, cfg)}};
  }
  std::cout << out.dump(2) << '\n';
  return exit_code(trace.status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving Taylor approximation solver and benchmark harness"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a benchmark instance as JSON");
  g->add_option("--n", gen.n, "Decision dimension")->required();
  g->add_option("--m", gen.m, "Number of constraints")->required();
  g->add_option("--seed", gen.seed, "Generator seed")->required();
  g->add_option("--family", gen.family, "Instance family")
      ->check(CLI::IsMember({"nonconvex", "convex", "strongly-convex"}));
  g->add_option("--sigma", gen.sigma, "Strong convexity modulus for strongly-convex");
  g->add_option("--out", gen.out, "Output JSON path")->required();

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Run MTA on one instance");
  s->add_option("--instance", solve.instance, "Instance JSON")->required();
  s->add_option("--p", solve.p, "Objective model order")->check(CLI::Range(1, 2));
  s->add_option("--q", solve.q, "Constraint model order")->check(CLI::Range(1, 2));
  s->add_flag("--adaptive", solve.adaptive, "Use the adaptive variant");
  s->add_option("--config", solve.config, "Config JSON applied over the defaults");
  s->add_option("--trace-out", solve.trace_out, "Trace CSV output path");
  s->add_option("--fstar", solve.fstar, "Reference value for the F-gap stopping rule");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Run an experiment plan");
  b->add_option("--plan", bench.plan, "Plan JSON")->required();
  b->add_option("--out-dir", bench.out_dir, "Output directory")->required();

  RatesArgs rates;
  auto* r = app.add_subcommand("rates", "Fit empirical rates to a trace CSV");
  r->add_option("--trace", rates.trace, "Trace CSV")->required();
  r->add_option("--metric", rates.metric, "KktMin or FGap");
  r->add_option("--fstar", rates.fstar, "Reference value F*");
  r->add_option("--p", rates.p, "Objective model order of the run")->check(CLI::Range(1, 2));
  r->add_option("--q", rates.q, "Constraint model order of the run")->check(CLI::Range(1, 2));
  r->add_option("--k-min", rates.k_min, "First k of the fit window");
  r->add_option("--k-max", rates.k_max, "Last k of the fit window");
  r->add_option("--max-slope", rates.max_slope, "Fail unless the fitted slope is at most this");
  r->add_flag("--linear", rates.linear, "Also check the linear rate of F - F*");
  r->add_option("--burn-in", rates.burn_in, "Iterations skipped by the linear-rate check");
  r->add_option("--report-out", rates.report_out, "Rate report JSON output path");

  DiagArgs diag;
  auto* d = app.add_subcommand("diag", "Run once and print trajectory diagnostics as JSON");
  d->add_option("--instance", diag.instance, "Instance JSON")->required();
  d->add_option("--p", diag.p, "Objective model order")->check(CLI::Range(1, 2));
  d->add_option("--q", diag.q, "Constraint model order")->check(CLI::Range(1, 2));
  d->add_flag("--adaptive", diag.adaptive, "Use the adaptive variant");
  d->add_option("--config", diag.config, "Config JSON applied over the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*s) return cmd_solve(solve);
    if (*b) return cmd_bench(bench);
    if (*r) return cmd_rates(rates);
    if (*d) return cmd_diag(diag);
  } catch (const InvalidInput& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInvalid;
  } catch (const mta::InfeasibleStartError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInfeasibleStart;
  } catch (const mta::InfeasibleModelError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInfeasibleModel;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInvalid;
  }
  return kExitInvalid;
}
