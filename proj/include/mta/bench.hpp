#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mta/mta.hpp"

namespace mta {

struct MethodSpec {
  std::string name;  // e.g. "MTA(2,2)"; must be unique within a plan
  int p = 2;
  int q = 2;
  Mode mode = Mode::kFixed;
  nlohmann::json config = nlohmann::json::object();  // applied over the defaults
};

struct ExperimentPlan {
  std::vector<std::pair<std::size_t, std::size_t>> cells;  // (n, m)
  std::vector<std::uint64_t> seeds;
  std::vector<MethodSpec> methods;
  Family family = Family::kNonconvex;
  double sigma = 0.0;  // strongly convex family only
  // Reference F*: every method rerun with budget_factor times the outer
  // iteration budget and kkt_tol, keeping the best feasible final value.
  int committee_budget_factor = 10;
  double committee_kkt_tol = 1e-8;
  // Cells whose median iteration counts must be ordered MTA(2,2) < MTA(2,1)
  // < MTA(1,1), with the pairwise order holding on this fraction of seeds.
  double ordering_seed_fraction = 0.8;
};

// Throws std::invalid_argument: no cells, no methods, repeated seeds or
// method names, unsupported (p, q), or a cell with n < 1.
void validate_plan(const ExperimentPlan& plan);

ExperimentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

// Three fixed-mode methods MTA(1,1), MTA(2,1), MTA(2,2) on cells (10,10),
// (10,20), (20,10) with seeds 1..10.
ExperimentPlan default_plan();

struct RunRecord {
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::string status;  // RunStatus name, or "Error"
  std::string message;
  int iters = 0;
  bool success = false;  // F - F* <= f_gap_tol and violation <= violation_tol
  double final_F = 0.0;
  double fstar = 0.0;
  double final_violation = 0.0;
  double final_kkt = 0.0;
  double min_descent_slack = 0.0;  // over accepted steps
  double max_violation = 0.0;      // over all iterates
  double wall_ms = 0.0;
  MtaTrace trace;
};

struct CellSummary {
  std::size_t n = 0;
  std::size_t m = 0;
  std::string method;
  int seeds = 0;
  double median_iters = 0.0;
  double median_wall_ms = 0.0;
  double success_rate = 0.0;
};

struct OrderingCheck {
  std::size_t n = 0;
  std::size_t m = 0;
  double median_11 = 0.0;
  double median_21 = 0.0;
  double median_22 = 0.0;
  int seeds = 0;
  int seeds_22_below_21 = 0;
  int seeds_21_below_11 = 0;
  bool pass = false;
};

struct PlanGates {
  bool invariants = true;   // descent slack >= -1e-10 and violation <= 1e-9 everywhere
  bool reference = true;    // F* <= final F + f_gap_tol where every method succeeded
  bool ordering = true;     // every checked cell passes
  int failed_runs = 0;      // status other than Converged; reported, not gated
  double worst_descent_slack = 0.0;
  double worst_violation = 0.0;
  std::vector<OrderingCheck> orderings;

  bool all() const { return invariants && reference && ordering; }
};

struct PlanResult {
  std::vector<RunRecord> runs;  // ordered by cell, seed, method
  std::vector<CellSummary> summary;
  PlanGates gates;
};

// Runs every (cell, seed, method). Instances run concurrently on a pool of
// MTA_THREADS workers (default: hardware concurrency); results do not depend
// on the pool size. Solver errors become failed records.
PlanResult run_plan(const ExperimentPlan& plan);

// Writes summary.csv, runs.csv, gates.json and traces/n{n}_m{m}_s{seed}_{method}.csv.
void write_plan_outputs(const PlanResult& result, const std::filesystem::path& out_dir);

std::string method_slug(const std::string& name);
int pool_size_from_env();

}  // namespace mta
