// Acceptance suite: one PASS/FAIL line per criterion. Exit status 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "mta/bench.hpp"
#include "mta/rates.hpp"

using namespace mta;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  Outcome() = default;
  Outcome(bool p, std::string d) : pass(p), detail(std::move(d)) {}

  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;
};

const double kSqrt3 = std::sqrt(3.0);

std::optional<DualState> random_dual_state(const SubproblemModel& model, std::mt19937_64& gen,
                                           double u_min) {
  // Near the boundary of D the step length blows up and both sides of the gap
  // identity lose about eps |theta| to rounding, so w stays in a box.
  std::uniform_real_distribution<double> uu(u_min, 2.0), ww(0.5, 20.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> u(model.m());
    for (auto& v : u) v = uu(gen);
    const double w = model.has_w() ? ww(gen) : 0.0;
    if (auto s = make_dual_state(model, u, w)) return s;
  }
  return std::nullopt;
}

SubproblemModel model_at_x0(const ProblemInstance& inst, int p, int q) {
  const MtaConfig cfg = default_fixed_config(inst, p, q);
  return build_model(inst, inst.x0(), p, q, cfg.M_p, cfg.M, cfg.M_q);
}

Vector dual_point(const SubproblemModel& model, const DualState& s) {
  Vector x = model.td.center;
  linalg::axpy(1.0, s.d, x);
  return x;
}

Outcome criterion1() {
  std::mt19937_64 gen(101);
  double worst = 0.0;
  int points = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 1 + (7 * i) % 20, m = i % 6;
    const auto model = model_at_x0(generate_benchmark(n, m, 1000 + i), 2, 2);
    for (int t = 0; t < 100; ++t) {
      const auto s = random_dual_state(model, gen, 0.0);
      if (!s) return {false, fmt::format("no dual point found for instance {}", i)};
      const double b = beta(model, *s);
      const double direct = theta(model, dual_point(model, *s), s->u) - b;
      worst = std::max(worst, std::abs(direct - duality_gap(model, *s)) / (1.0 + std::abs(b)));
      ++points;
    }
  }
  return {worst <= 1e-10, fmt::format("{} points, worst scaled error {:.3e} (limit 1e-10)", points, worst)};
}

Outcome criterion2() {
  ProblemInstance::Data d;
  d.n = 1;
  d.m = 0;
  d.family = Family::kCustom;
  CompositeFunction f;
  f.a = {0.0};
  f.Q = SymMatrix(1);
  f.c = {1.0};
  d.functions = {f};
  d.x0 = {0.0};
  d.lip_grad = {1.0};
  d.lip_hess = {1.0};
  d.convex = {true};
  const auto inst = ProblemInstance::create(std::move(d));
  // c_0 = M_p + M = 6: minimize d + |d|^3.
  const auto model = build_model(inst, inst.x0(), 2, 2, 5.0, 1.0, {});
  const auto sol = solve_dual(model, {});
  const double target = -2.0 * kSqrt3 / 9.0;
  const double e_theta = std::abs(sol.primal_value - target);
  const double e_beta = std::abs(sol.beta - target);
  const double e_x = std::abs(sol.x_next[0] + 1.0 / kSqrt3);
  return {sol.status == SubproblemStatus::kConverged && std::max({e_theta, e_beta, e_x}) <= 1e-8,
          fmt::format("theta {:.12f}, beta {:.12f}, step {:.12f}; errors {:.1e} {:.1e} {:.1e}",
                      sol.primal_value, sol.beta, sol.x_next[0], e_theta, e_beta, e_x)};
}

Outcome criterion3() {
  std::mt19937_64 gen(303);
  const std::pair<int, int> orders[] = {{2, 2}, {2, 1}, {1, 1}};
  double worst = 0.0;
  int components = 0;
  for (int i = 0; i < 10; ++i) {
    const auto [p, q] = orders[i % 3];
    const auto model = model_at_x0(generate_benchmark(4 + i, 1 + i % 5, 300 + i), p, q);
    for (int t = 0; t < 20; ++t) {
      const auto s = random_dual_state(model, gen, 0.05);
      if (!s) return {false, fmt::format("no interior dual point for instance {}", i)};
      const auto grad = beta_gradient(model, *s);
      auto beta_at = [&](const std::vector<double>& u, double w) {
        return beta(model, *make_dual_state(model, u, w));
      };
      auto record = [&](double analytic, double fd) {
        worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
        ++components;
      };
      for (std::size_t j = 0; j < model.m(); ++j) {
        const double h = 1e-5 * (1.0 + s->u[j]);
        auto up = s->u, dn = s->u;
        up[j] += h;
        dn[j] -= h;
        record(grad.u[j], (beta_at(up, s->w) - beta_at(dn, s->w)) / (2 * h));
      }
      if (grad.w) {
        const double h = 1e-5 * (1.0 + s->w);
        record(*grad.w, (beta_at(s->u, s->w + h) - beta_at(s->u, s->w - h)) / (2 * h));
      }
    }
  }
  return {worst <= 1e-6,
          fmt::format("{} components, worst relative error {:.3e} (limit 1e-6)", components, worst)};
}

// The subproblem step the algorithm takes: the dual solution when it is
// certified, otherwise the local fallback (models with a duality gap).
Outcome criterion4() {
  double worst = -std::numeric_limits<double>::infinity();
  int models = 0, fallbacks = 0;
  double largest_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_benchmark(2, 1, seed);
    for (auto [p, q] : {std::pair{1, 1}, {2, 1}, {2, 2}}) {
      const MtaConfig cfg = default_fixed_config(inst, p, q);
      const auto model = build_model(inst, inst.x0(), p, q, cfg.M_p, cfg.M, cfg.M_q);
      const auto dual = solve_dual(model, cfg.dual);
      const auto step = mta_step(inst, inst.x0(), StepParams{p, q, cfg.M_p, cfg.M, cfg.M_q}, cfg.dual,
                                 cfg.stop.violation_tol);
      if (step.local_solve) {
        ++fallbacks;
        largest_gap = std::max(largest_gap, dual.gap);
      }
      double grid = std::numeric_limits<double>::infinity();
      for (int a = 0; a <= 400; ++a) {
        for (int b = 0; b <= 400; ++b) {
          const Vector x{inst.x0()[0] - 2.0 + 0.01 * a, inst.x0()[1] - 2.0 + 0.01 * b};
          if (model_value(model, 1, x) <= 0.0) grid = std::min(grid, model_value(model, 0, x));
        }
      }
      // Model feasibility up to the eta3 allowance of the stopping conditions.
      const double r = step.step_norm;
      const double allowance = cfg.dual.eta3 * std::pow(r, q + 1) / std::tgamma(q + 2.0) + 1e-12;
      const bool feasible = model_value(model, 1, step.x_next) <= allowance;
      const double excess = model_value(model, 0, step.x_next) - grid;
      worst = std::max(worst, feasible ? excess : std::numeric_limits<double>::infinity());
      ++models;
    }
  }
  Outcome out{worst <= 1e-3,
              fmt::format("{} models (5 seeds x 3 orders), worst (step value - grid minimum) {:.3e} (limit 1e-3); "
                          "{} used the local fallback",
                          models, worst, fallbacks)};
  if (fallbacks > 0) {
    out.notes.push_back(fmt::format(
        "the dual solver alone cannot close a Lagrangian duality gap (largest {:.2e}); those models are "
        "scored on the local fallback step",
        largest_gap));
  }
  return out;
}

// Best feasible final F over long, tight runs of both model orders; also the
// iterate reaching it.
std::pair<double, Vector> reference_solution(const ProblemInstance& inst) {
  double best = std::numeric_limits<double>::infinity();
  Vector x_best = inst.x0();
  for (int pq : {1, 2}) {
    MtaConfig cfg = default_fixed_config(inst, pq, pq);
    cfg.stop.kkt_tol = 1e-10;
    cfg.stop.step_norm_tol = 0.0;
    cfg.stop.max_outer_iters = 5000;
    const auto t = run_fixed(inst, cfg);
    for (const auto& row : t.rows) {
      if (row.max_violation <= 1e-9 && row.F < best) {
        best = row.F;
        x_best = row.x;
      }
    }
  }
  return {best, x_best};
}

Outcome criterion6() {
  int runs = 0, violations = 0;
  double worst_ratio = 0.0;
  for (std::size_t n : {5, 10}) {
    for (std::size_t m : {2, 5}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto inst = generate_convex_benchmark(n, m, seed, 0.0);
        const auto [fstar, x_star] = reference_solution(inst);
        for (int pq : {1, 2}) {
          const MtaConfig cfg = default_fixed_config(inst, pq, pq);
          const auto t = run_fixed(inst, cfg);
          ObservedConstants obs = observe_constants(t);
          obs.D = 0.0;
          for (const auto& row : t.rows) obs.D = std::max(obs.D, linalg::norm2(linalg::subtract(row.x, x_star)));
          const double C = convex_rate_constant(inst, cfg, obs);
          for (std::size_t k = 1; k < t.rows.size(); ++k) {
            const double bound = C / std::pow(static_cast<double>(k), pq);
            const double gap = t.rows[k].F - fstar;
            worst_ratio = std::max(worst_ratio, gap / bound);
            if (gap > bound) ++violations;
          }
          ++runs;
        }
      }
    }
  }
  return {violations == 0,
          fmt::format("{} runs, {} iterates above the bound, worst gap/bound {:.3e}", runs, violations,
                      worst_ratio)};
}

Outcome criterion7() {
  Outcome out;
  int good = 0;
  std::string slopes;
  bool any_saturated = false;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_benchmark(10, 5, seed);
    MtaConfig cfg = default_fixed_config(inst, 2, 2);
    cfg.stop.kkt_tol = 1e-12;
    cfg.stop.step_norm_tol = 0.0;
    cfg.stop.max_outer_iters = 200;
    cfg.store_iterates = false;
    const auto t = run_fixed(inst, cfg);
    try {
      const auto rep = fit_rate(t, RateMetric::kKktMin, {10, 200});
      if (rep.fitted_slope <= -0.45) ++good;
      any_saturated = any_saturated || rep.saturated;
      slopes += fmt::format(" s{}:{:.3f}{}", seed, rep.fitted_slope,
                            rep.saturated ? fmt::format("[k=1..{}]", rep.k_last) : "");
    } catch (const std::invalid_argument& e) {
      slopes += fmt::format(" s{}:error({})", seed, e.what());
    }
  }
  out.pass = good >= 4;
  out.detail = fmt::format("{}/5 seeds with slope <= -0.45;{}", good, slopes);
  if (any_saturated) {
    out.notes.push_back(
        "min-KKT reached its 1e-8 floor before k = 10 on the seeds marked [k=1..K]; "
        "their slope is fitted over every pre-floor iterate instead of [10, 200]");
  }
  return out;
}

Outcome criterion9() {
  Outcome out;
  bool pass = true;
  double worst22 = 0.0, worst11 = 0.0;
  std::size_t ratios22 = 0, ratios11 = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_convex_benchmark(10, 5, seed, 1.0);
    const double fstar = reference_solution(inst).first;
    for (int pq : {2, 1}) {
      MtaConfig cfg = default_fixed_config(inst, pq, pq);
      cfg.stop.kkt_tol = 1e-10;
      cfg.stop.step_norm_tol = 0.0;
      cfg.stop.max_outer_iters = 2000;
      cfg.store_iterates = false;
      const auto t = run_fixed(inst, cfg);
      // MTA(2,2) reaches F* within a handful of steps, so it keeps every ratio.
      const auto c = check_linear_rate(t, fstar, pq == 2 ? 0 : 5);
      pass = pass && c.flag && !c.ratios.empty();
      double& worst = pq == 2 ? worst22 : worst11;
      if (!c.ratios.empty()) worst = std::max(worst, c.ratio_max);
      (pq == 2 ? ratios22 : ratios11) += c.ratios.size();
    }
  }
  out.pass = pass;
  out.detail = fmt::format("MTA(2,2): {} ratios, max {:.3e}; MTA(1,1): {} ratios, max {:.4f}", ratios22,
                           worst22, ratios11, worst11);
  return out;
}

Outcome criterion10() {
  constexpr double kTol = 1e-6;
  bool pass = true;
  int runs = 0;
  int worst_j = 0, worst_bound = 0;
  double worst_viol = 0.0, worst_ratio = 0.0, worst_raw = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_benchmark(10, 5, seed);
    for (auto [p, q] : {std::pair{1, 1}, {2, 1}, {2, 2}}) {
      MtaConfig adaptive = default_adaptive_config(inst, p, q);
      MtaConfig fixed = default_fixed_config(inst, p, q);
      adaptive.stop.kkt_tol = fixed.stop.kkt_tol = kTol;
      adaptive.store_iterates = fixed.store_iterates = false;
      if (adaptive.M_p0 != inst.lipschitz_for_order(0, p) / 64.0) return {false, "M_p0 is not L_p/64"};
      const int bound = adaptive_doubling_bound(inst, adaptive);
      const auto ta = run_adaptive(inst, adaptive);
      const auto tf = run_fixed(inst, fixed);
      for (const auto& row : ta.rows) {
        worst_viol = std::max(worst_viol, row.max_violation);
        if (row.doublings > bound) pass = false;
        if (row.doublings - bound > worst_j - worst_bound || runs == 0) {
          worst_j = row.doublings;
          worst_bound = bound;
        }
      }
      const double ka = ta.last().kkt_measure, kf = tf.last().kkt_measure;
      worst_raw = std::max(worst_raw, ka / kf);
      worst_ratio = std::max(worst_ratio, ka / std::max(kf, kTol));
      ++runs;
    }
  }
  pass = pass && worst_viol <= 1e-9 && worst_ratio <= 10.0;
  Outcome out{pass,
              fmt::format("{} runs; max violation {:.1e}; doublings {} vs bound {}; worst adaptive/fixed final "
                          "kkt {:.2f} (raw {:.2f})",
                          runs, worst_viol, worst_j, worst_bound, worst_ratio, worst_raw)};
  out.notes.push_back(fmt::format(
      "both runs stop at kkt_measure <= {:g}; the fixed run's final value is floored at that tolerance "
      "before taking the ratio",
      kTol));
  return out;
}

Outcome criterion11() {
  int clean = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = generate_benchmark(10, 5, seed);
    MtaConfig cfg = default_fixed_config(inst, 2, 2);
    const double C_u = run_fixed(inst, cfg).max_mult_norm();
    cfg.M = lyapunov_required_M(inst, cfg, C_u);
    const auto t = run_fixed(inst, cfg);
    const auto diag = lyapunov_diag(t, inst, cfg);
    if (diag.failures.empty()) ++clean;
    detail += fmt::format(" s{}: M={:.1f}, {} steps, {} failures;", seed, cfg.M, diag.xi.size(),
                          diag.failures.size());
  }
  return {clean == 5, fmt::format("{}/5 seeds strictly decreasing;{}", clean, detail)};
}

// The default plan, run twice; shared by criteria 5, 8 and 12.
struct PlanRuns {
  PlanResult first;
  PlanResult second;
  fs::path dir_first;
  fs::path dir_second;
};

Outcome criterion5(const PlanRuns& pr) {
  double worst_slack = std::numeric_limits<double>::infinity(), worst_viol = 0.0;
  int rows = 0, errors = 0;
  for (const auto& r : pr.first.runs) {
    if (r.status == "Error") ++errors;
    for (std::size_t k = 0; k < r.trace.rows.size(); ++k) {
      if (k > 0) worst_slack = std::min(worst_slack, r.trace.rows[k].descent_slack);
      worst_viol = std::max(worst_viol, r.trace.rows[k].max_violation);
      ++rows;
    }
  }
  return {errors == 0 && worst_slack >= -1e-10 && worst_viol <= 1e-9 && pr.first.gates.invariants,
          fmt::format("{} runs, {} iterates; worst descent slack {:.2e}, worst violation {:.2e}, {} errors",
                      pr.first.runs.size(), rows, worst_slack, worst_viol, errors)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

Outcome criterion8(const PlanRuns& pr) {
  bool pass = true;
  std::string detail;
  for (const auto& [n, m] : default_plan().cells) {
    std::map<std::uint64_t, std::map<std::string, int>> iters;
    for (const auto& r : pr.first.runs) {
      if (r.n == n && r.m == m) iters[r.seed][r.method] = r.iters;
    }
    std::vector<double> i11, i21, i22;
    int below_21 = 0, below_11 = 0;
    for (auto& [seed, by] : iters) {
      i11.push_back(by.at("MTA(1,1)"));
      i21.push_back(by.at("MTA(2,1)"));
      i22.push_back(by.at("MTA(2,2)"));
      if (by["MTA(2,2)"] < by["MTA(2,1)"]) ++below_21;
      if (by["MTA(2,1)"] < by["MTA(1,1)"]) ++below_11;
    }
    const double m11 = median(i11), m21 = median(i21), m22 = median(i22);
    const int seeds = static_cast<int>(iters.size());
    const bool ok = m22 < m21 && m21 < m11 && below_21 >= 8 * seeds / 10 && below_11 >= 8 * seeds / 10;
    pass = pass && ok;
    detail += fmt::format(" ({},{}): medians {}/{}/{}, seeds {}/{} and {}/{};", n, m, m11, m21, m22, below_11,
                          seeds, below_21, seeds);
  }
  pass = pass && pr.first.gates.ordering;
  return {pass, "iterations MTA(1,1)/MTA(2,1)/MTA(2,2), pairwise seed counts (2,1)<(1,1) and (2,2)<(2,1):" +
                    detail};
}

// RFC 4180 fields: quoted fields may hold commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

// Rows of a CSV file with every column whose header names wall_ms removed.
// Returns nullopt when a row's width differs from the header's.
std::optional<std::vector<std::vector<std::string>>> csv_without_wall_clock(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::vector<bool> keep;
  std::string line;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (keep.empty()) {
      for (const auto& c : cells) keep.push_back(c.find("wall_ms") == std::string::npos);
    }
    if (cells.size() != keep.size()) return std::nullopt;
    std::vector<std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (keep[i]) row.push_back(cells[i]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Outcome criterion12(const PlanRuns& pr) {
  std::set<fs::path> files;
  for (const auto& dir : {pr.dir_first, pr.dir_second}) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.path().extension() == ".csv") files.insert(fs::relative(e.path(), dir));
    }
  }
  int differing = 0;
  std::string first_diff;
  for (const auto& rel : files) {
    const auto a = csv_without_wall_clock(pr.dir_first / rel);
    const auto b = csv_without_wall_clock(pr.dir_second / rel);
    if (!fs::exists(pr.dir_first / rel) || !fs::exists(pr.dir_second / rel) || !a || !b || *a != *b) {
      if (differing++ == 0) first_diff = rel.string();
    }
  }
  const bool summary_present = files.count("summary.csv") == 1;
  return {differing == 0 && summary_present && files.size() > 2,
          fmt::format("{} CSV files compared without wall_ms columns, {} differ{}", files.size(), differing,
                      first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string work_dir = (fs::temp_directory_path() / "mta_acceptance").string();
  app.add_option("criteria", only, "Run only these criteria");
  app.add_option("--work-dir", work_dir, "Directory for the plan outputs");
  CLI11_PARSE(app, argc, argv);
  auto selected = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::optional<PlanRuns> plan_runs;
  auto plan = [&]() -> const PlanRuns& {
    if (!plan_runs) {
      PlanRuns pr;
      pr.dir_first = fs::path(work_dir) / "run1";
      pr.dir_second = fs::path(work_dir) / "run2";
      fs::remove_all(work_dir);
      pr.first = run_plan(default_plan());
      write_plan_outputs(pr.first, pr.dir_first);
      pr.second = run_plan(default_plan());
      write_plan_outputs(pr.second, pr.dir_second);
      plan_runs = std::move(pr);
    }
    return *plan_runs;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dual-gap identity", criterion1},
      {"scalar closed form", criterion2},
      {"beta gradient vs finite differences", criterion3},
      {"subproblem vs grid oracle", criterion4},
      {"descent and feasibility invariants on the default plan", [&] { return criterion5(plan()); }},
      {"convex rate bound", criterion6},
      {"nonconvex rate trend", criterion7},
      {"iteration ordering on the default plan", [&] { return criterion8(plan()); }},
      {"uniformly convex linear rate", criterion9},
      {"adaptive MTA", criterion10},
      {"Lyapunov descent", criterion11},
      {"determinism of the default plan", [&] { return criterion12(plan()); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failed;
    fmt::print("{} {:2d} {}: {} [{:.1f} s]\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first, out.detail,
               secs);
    for (const auto& note : out.notes) fmt::print("     note: {}\n", note);
    std::fflush(stdout);
  }
  if (plan_runs) fs::remove_all(work_dir);
  return failed == 0 ? 0 : 1;
}
