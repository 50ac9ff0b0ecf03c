#include "mta/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <thread>

#include "mta/config_io.hpp"
#include "mta/trace_io.hpp"

namespace mta {

using nlohmann::json;

namespace {

// Quotes a CSV field that holds a comma, quote or newline (method names do).
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

constexpr double kSlackFloor = -1e-10;
constexpr double kViolationCap = 1e-9;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

ProblemInstance make_instance(const ExperimentPlan& plan, std::size_t n, std::size_t m,
                              std::uint64_t seed) {
  switch (plan.family) {
    case Family::kNonconvex: return generate_benchmark(n, m, seed);
    case Family::kConvex: return generate_convex_benchmark(n, m, seed, 0.0);
    case Family::kStronglyConvex: return generate_convex_benchmark(n, m, seed, plan.sigma);
    case Family::kCustom: break;
  }
  throw std::invalid_argument("plan family must be nonconvex, convex or strongly-convex");
}

MtaConfig method_config(const MethodSpec& method, const ProblemInstance& inst) {
  MtaConfig cfg = method.mode == Mode::kFixed ? default_fixed_config(inst, method.p, method.q)
                                              : default_adaptive_config(inst, method.p, method.q);
  apply_config_json(method.config, cfg, inst.m());
  cfg.store_iterates = false;
  return cfg;
}

// Best feasible final value over tightened reruns of every method.
double committee_fstar(const ExperimentPlan& plan, const ProblemInstance& inst) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& method : plan.methods) {
    MtaConfig cfg = method_config(method, inst);
    cfg.stop.max_outer_iters *= plan.committee_budget_factor;
    cfg.stop.kkt_tol = plan.committee_kkt_tol;
    cfg.stop.step_norm_tol = 0.0;
    try {
      const MtaTrace t = run(inst, cfg);
      for (const auto& row : t.rows) {
        if (row.max_violation <= kViolationCap) best = std::min(best, row.F);
      }
    } catch (const std::exception&) {
      // A failed committee member only removes one candidate value.
    }
  }
  return best;
}

RunRecord run_one(const MethodSpec& method, const ProblemInstance& inst, double fstar) {
  RunRecord rec;
  rec.method = method.name;
  rec.fstar = fstar;
  try {
    const MtaConfig cfg = method_config(method, inst);
    rec.trace = run(inst, cfg, std::isfinite(fstar) ? std::optional<double>(fstar) : std::nullopt);
    const MtaTrace& t = rec.trace;
    rec.status = to_string(t.status);
    rec.message = t.message;
    rec.iters = t.iterations();
    rec.final_F = t.last().F;
    rec.final_violation = t.last().max_violation;
    rec.final_kkt = t.last().kkt_measure;
    rec.wall_ms = t.total_ms;
    rec.min_descent_slack = std::numeric_limits<double>::infinity();
    for (const auto& row : t.rows) {
      if (row.k >= 1) rec.min_descent_slack = std::min(rec.min_descent_slack, row.descent_slack);
      rec.max_violation = std::max(rec.max_violation, row.max_violation);
    }
    if (t.rows.size() < 2) rec.min_descent_slack = 0.0;
    rec.success = t.status == RunStatus::kConverged && rec.final_F - fstar <= cfg.stop.f_gap_tol &&
                  rec.final_violation <= cfg.stop.violation_tol;
  } catch (const std::exception& e) {
    rec.status = "Error";
    rec.message = e.what();
  }
  return rec;
}

const MethodSpec* find_fixed(const ExperimentPlan& plan, int p, int q) {
  for (const auto& method : plan.methods) {
    if (method.p == p && method.q == q && method.mode == Mode::kFixed) return &method;
  }
  return nullptr;
}

PlanGates evaluate_gates(const ExperimentPlan& plan, const std::vector<RunRecord>& runs) {
  PlanGates g;
  g.worst_descent_slack = std::numeric_limits<double>::infinity();
  for (const auto& r : runs) {
    if (r.status != "Converged") ++g.failed_runs;
    if (r.status == "Error") {
      g.invariants = false;
      continue;
    }
    g.worst_descent_slack = std::min(g.worst_descent_slack, r.min_descent_slack);
    g.worst_violation = std::max(g.worst_violation, r.max_violation);
    if (r.min_descent_slack < kSlackFloor || r.max_violation > kViolationCap) g.invariants = false;
  }

  const std::size_t per_instance = plan.methods.size();
  for (std::size_t base = 0; base < runs.size(); base += per_instance) {
    bool all_ok = true;
    for (std::size_t j = 0; j < per_instance; ++j) all_ok = all_ok && runs[base + j].success;
    if (!all_ok) continue;
    for (std::size_t j = 0; j < per_instance; ++j) {
      const auto& r = runs[base + j];
      const MethodSpec& method = plan.methods[j];
      const double tol = method.config.contains("stop") && method.config["stop"].contains("f_gap_tol")
                             ? method.config["stop"]["f_gap_tol"].get<double>()
                             : StopCriteria{}.f_gap_tol;
      if (!(r.fstar <= r.final_F + tol)) g.reference = false;
    }
  }

  const MethodSpec* m11 = find_fixed(plan, 1, 1);
  const MethodSpec* m21 = find_fixed(plan, 2, 1);
  const MethodSpec* m22 = find_fixed(plan, 2, 2);
  if (m11 && m21 && m22) {
    auto index_of = [&](const MethodSpec* spec) {
      return static_cast<std::size_t>(spec - plan.methods.data());
    };
    const std::size_t i11 = index_of(m11), i21 = index_of(m21), i22 = index_of(m22);
    const std::size_t per_cell = plan.seeds.size() * per_instance;
    for (std::size_t c = 0; c < plan.cells.size(); ++c) {
      OrderingCheck oc;
      oc.n = plan.cells[c].first;
      oc.m = plan.cells[c].second;
      std::vector<double> it11, it21, it22;
      for (std::size_t s = 0; s < plan.seeds.size(); ++s) {
        const std::size_t base = c * per_cell + s * per_instance;
        const int a = runs[base + i11].iters, b = runs[base + i21].iters, d = runs[base + i22].iters;
        it11.push_back(a);
        it21.push_back(b);
        it22.push_back(d);
        if (d < b) ++oc.seeds_22_below_21;
        if (b < a) ++oc.seeds_21_below_11;
      }
      oc.seeds = static_cast<int>(plan.seeds.size());
      oc.median_11 = median(it11);
      oc.median_21 = median(it21);
      oc.median_22 = median(it22);
      const double need = plan.ordering_seed_fraction * oc.seeds;
      oc.pass = oc.median_22 < oc.median_21 && oc.median_21 < oc.median_11 &&
                oc.seeds_22_below_21 >= need && oc.seeds_21_below_11 >= need;
      if (!oc.pass) g.ordering = false;
      g.orderings.push_back(oc);
    }
  }
  if (!std::isfinite(g.worst_descent_slack)) g.worst_descent_slack = 0.0;
  return g;
}

Mode mode_from_string(const std::string& s) {
  if (s == "fixed") return Mode::kFixed;
  if (s == "adaptive") return Mode::kAdaptive;
  throw std::invalid_argument("method mode must be \"fixed\" or \"adaptive\"");
}

}  // namespace

std::string method_slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

int pool_size_from_env() {
  if (const char* env = std::getenv("MTA_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void validate_plan(const ExperimentPlan& plan) {
  if (plan.cells.empty()) throw std::invalid_argument("plan has no cells");
  for (const auto& [n, m] : plan.cells) {
    if (n < 1) throw std::invalid_argument("plan cells need n >= 1");
  }
  if (plan.seeds.empty()) throw std::invalid_argument("plan has no seeds");
  if (std::set<std::uint64_t>(plan.seeds.begin(), plan.seeds.end()).size() != plan.seeds.size()) {
    throw std::invalid_argument("plan seeds must be distinct");
  }
  if (plan.methods.empty()) throw std::invalid_argument("plan has no methods");
  std::set<std::string> names, slugs;
  for (const auto& method : plan.methods) {
    const bool supported = (method.p == 1 && method.q == 1) || (method.p == 2 && method.q == 1) ||
                           (method.p == 2 && method.q == 2);
    if (!supported) throw std::invalid_argument("unsupported method orders in " + method.name);
    if (method.name.empty() || !names.insert(method.name).second ||
        !slugs.insert(method_slug(method.name)).second) {
      throw std::invalid_argument("method names must be non-empty and distinct: " + method.name);
    }
    if (!method.config.is_object()) throw std::invalid_argument("method config must be an object");
  }
  if (plan.family == Family::kCustom) throw std::invalid_argument("plan family cannot be custom");
  if (plan.committee_budget_factor < 1) throw std::invalid_argument("committee budget factor must be >= 1");
  if (!(plan.ordering_seed_fraction >= 0.0 && plan.ordering_seed_fraction <= 1.0)) {
    throw std::invalid_argument("ordering_seed_fraction must lie in [0, 1]");
  }
}

ExperimentPlan plan_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("plan must be a JSON object");
  static const std::set<std::string> known = {"cells", "seeds", "methods", "family", "sigma",
                                              "committee", "ordering_seed_fraction"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("plan: unknown key " + key);
  }
  ExperimentPlan plan;
  try {
    for (const auto& cell : j.at("cells")) {
      if (!cell.is_array() || cell.size() != 2) throw std::invalid_argument("plan cells are [n, m] pairs");
      plan.cells.emplace_back(cell[0].get<std::size_t>(), cell[1].get<std::size_t>());
    }
    plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& mj : j.at("methods")) {
      MethodSpec method;
      method.name = mj.at("name").get<std::string>();
      method.p = mj.at("p").get<int>();
      method.q = mj.at("q").get<int>();
      method.mode = mode_from_string(mj.value("mode", std::string("fixed")));
      if (mj.contains("config")) method.config = mj["config"];
      plan.methods.push_back(std::move(method));
    }
    plan.family = family_from_string(j.value("family", std::string("nonconvex")));
    plan.sigma = j.value("sigma", 0.0);
    if (j.contains("committee")) {
      const auto& c = j["committee"];
      plan.committee_budget_factor = c.value("budget_factor", plan.committee_budget_factor);
      plan.committee_kkt_tol = c.value("kkt_tol", plan.committee_kkt_tol);
    }
    plan.ordering_seed_fraction = j.value("ordering_seed_fraction", plan.ordering_seed_fraction);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("plan: ") + e.what());
  }
  validate_plan(plan);
  return plan;
}

json plan_to_json(const ExperimentPlan& plan) {
  json j;
  json cells = json::array();
  for (const auto& [n, m] : plan.cells) cells.push_back({n, m});
  j["cells"] = cells;
  j["seeds"] = plan.seeds;
  json methods = json::array();
  for (const auto& method : plan.methods) {
    methods.push_back({{"name", method.name},
                       {"p", method.p},
                       {"q", method.q},
                       {"mode", method.mode == Mode::kFixed ? "fixed" : "adaptive"},
                       {"config", method.config}});
  }
  j["methods"] = methods;
  j["family"] = to_string(plan.family);
  j["sigma"] = plan.sigma;
  j["committee"] = {{"budget_factor", plan.committee_budget_factor},
                    {"kkt_tol", plan.committee_kkt_tol}};
  j["ordering_seed_fraction"] = plan.ordering_seed_fraction;
  return j;
}

ExperimentPlan default_plan() {
  ExperimentPlan plan;
  plan.cells = {{10, 10}, {10, 20}, {20, 10}};
  for (std::uint64_t s = 1; s <= 10; ++s) plan.seeds.push_back(s);
  plan.methods = {{"MTA(1,1)", 1, 1, Mode::kFixed, json::object()},
                  {"MTA(2,1)", 2, 1, Mode::kFixed, json::object()},
                  {"MTA(2,2)", 2, 2, Mode::kFixed, json::object()}};
  return plan;
}

PlanResult run_plan(const ExperimentPlan& plan) {
  validate_plan(plan);
  const std::size_t per_instance = plan.methods.size();
  const std::size_t instances = plan.cells.size() * plan.seeds.size();
  PlanResult result;
  result.runs.resize(instances * per_instance);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t job; (job = next.fetch_add(1)) < instances;) {
      const auto [n, m] = plan.cells[job / plan.seeds.size()];
      const std::uint64_t seed = plan.seeds[job % plan.seeds.size()];
      std::vector<RunRecord> recs;
      try {
        const ProblemInstance inst = make_instance(plan, n, m, seed);
        const double fstar = committee_fstar(plan, inst);
        for (const auto& method : plan.methods) recs.push_back(run_one(method, inst, fstar));
      } catch (const std::exception& e) {
        recs.assign(per_instance, RunRecord{});
        for (std::size_t j = 0; j < per_instance; ++j) {
          recs[j].method = plan.methods[j].name;
          recs[j].status = "Error";
          recs[j].message = e.what();
        }
      }
      for (std::size_t j = 0; j < per_instance; ++j) {
        recs[j].n = n;
        recs[j].m = m;
        recs[j].seed = seed;
        result.runs[job * per_instance + j] = std::move(recs[j]);
      }
    }
  };
  const int threads = std::min<int>(pool_size_from_env(), static_cast<int>(instances));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t c = 0; c < plan.cells.size(); ++c) {
    for (std::size_t j = 0; j < per_instance; ++j) {
      CellSummary s;
      s.n = plan.cells[c].first;
      s.m = plan.cells[c].second;
      s.method = plan.methods[j].name;
      s.seeds = static_cast<int>(plan.seeds.size());
      std::vector<double> iters, wall;
      int ok = 0;
      for (std::size_t k = 0; k < plan.seeds.size(); ++k) {
        const RunRecord& r = result.runs[(c * plan.seeds.size() + k) * per_instance + j];
        iters.push_back(r.iters);
        wall.push_back(r.wall_ms);
        ok += r.success ? 1 : 0;
      }
      s.median_iters = median(iters);
      s.median_wall_ms = median(wall);
      s.success_rate = static_cast<double>(ok) / s.seeds;
      result.summary.push_back(s);
    }
  }
  result.gates = evaluate_gates(plan, result.runs);
  return result;
}

void write_plan_outputs(const PlanResult& result, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "traces");
  auto open = [](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };

  {
    std::ofstream out = open(out_dir / "summary.csv");
    out << "n,m,method,seeds,median_iters,median_wall_ms,success_rate\n";
    for (const auto& s : result.summary) {
      out << s.n << ',' << s.m << ',' << csv_field(s.method) << ',' << s.seeds << ','
          << format_real(s.median_iters) << ',' << format_real(s.median_wall_ms) << ','
          << format_real(s.success_rate) << '\n';
    }
  }
  {
    std::ofstream out = open(out_dir / "runs.csv");
    out << "n,m,seed,method,status,iters,success,final_F,fstar,final_violation,final_kkt,"
           "min_descent_slack,max_violation,wall_ms\n";
    for (const auto& r : result.runs) {
      out << r.n << ',' << r.m << ',' << r.seed << ',' << csv_field(r.method) << ',' << r.status << ','
          << r.iters << ',' << (r.success ? 1 : 0) << ',' << format_real(r.final_F) << ','
          << format_real(r.fstar) << ',' << format_real(r.final_violation) << ','
          << format_real(r.final_kkt) << ',' << format_real(r.min_descent_slack) << ','
          << format_real(r.max_violation) << ',' << format_real(r.wall_ms) << '\n';
    }
  }
  for (const auto& r : result.runs) {
    if (r.trace.rows.empty()) continue;
    save_trace_csv(r.trace, out_dir / "traces" /
                                fmt::format("n{}_m{}_s{}_{}.csv", r.n, r.m, r.seed, method_slug(r.method)));
  }
  {
    const PlanGates& g = result.gates;
    json j;
    j["invariants"] = g.invariants;
    j["reference"] = g.reference;
    j["ordering"] = g.ordering;
    j["all"] = g.all();
    j["failed_runs"] = g.failed_runs;
    j["worst_descent_slack"] = g.worst_descent_slack;
    j["worst_violation"] = g.worst_violation;
    json cells = json::array();
    for (const auto& oc : g.orderings) {
      cells.push_back({{"n", oc.n},
                       {"m", oc.m},
                       {"median_iters_11", oc.median_11},
                       {"median_iters_21", oc.median_21},
                       {"median_iters_22", oc.median_22},
                       {"seeds", oc.seeds},
                       {"seeds_22_below_21", oc.seeds_22_below_21},
                       {"seeds_21_below_11", oc.seeds_21_below_11},
                       {"pass", oc.pass}});
    }
    j["orderings"] = cells;
    std::ofstream out = open(out_dir / "gates.json");
    out << j.dump(2) << '\n';
  }
}

}  // namespace mta
