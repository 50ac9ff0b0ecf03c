#include "mta/config_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <stdexcept>

namespace mta {

using nlohmann::json;

namespace {

double get_real(const json& j, const char* key) {
  if (!j.is_number()) throw std::invalid_argument(fmt::format("config: {} must be a number", key));
  return j.get<double>();
}

int get_int(const json& j, const char* key) {
  if (!j.is_number_integer()) {
    throw std::invalid_argument(fmt::format("config: {} must be an integer", key));
  }
  return j.get<int>();
}

bool get_bool(const json& j, const char* key) {
  if (!j.is_boolean()) throw std::invalid_argument(fmt::format("config: {} must be a boolean", key));
  return j.get<bool>();
}

std::vector<double> get_per_constraint(const json& j, const char* key, std::size_t m) {
  if (j.is_number()) return std::vector<double>(m, j.get<double>());
  // Empty means unset; validate_config checks the sizes of the mode in use.
  if (j.is_array() && j.empty()) return {};
  if (!j.is_array() || j.size() != m) {
    throw std::invalid_argument(
        fmt::format("config: {} must be a number or an array of {} numbers", key, m));
  }
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_real(v, key));
  return out;
}

void apply_dual(const json& j, DualTolerances& d) {
  if (!j.is_object()) throw std::invalid_argument("config: dual must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "eta1") d.eta1 = get_real(v, "dual.eta1");
    else if (key == "eta2") d.eta2 = get_real(v, "dual.eta2");
    else if (key == "eta3") d.eta3 = get_real(v, "dual.eta3");
    else if (key == "gap_tol") d.gap_tol = get_real(v, "dual.gap_tol");
    else if (key == "max_iters") d.max_iters = get_int(v, "dual.max_iters");
    else throw std::invalid_argument("config: unknown key dual." + key);
  }
}

void apply_stop(const json& j, StopCriteria& s) {
  if (!j.is_object()) throw std::invalid_argument("config: stop must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "f_gap_tol") s.f_gap_tol = get_real(v, "stop.f_gap_tol");
    else if (key == "violation_tol") s.violation_tol = get_real(v, "stop.violation_tol");
    else if (key == "max_outer_iters") s.max_outer_iters = get_int(v, "stop.max_outer_iters");
    else if (key == "step_norm_tol") s.step_norm_tol = get_real(v, "stop.step_norm_tol");
    else if (key == "kkt_tol") s.kkt_tol = get_real(v, "stop.kkt_tol");
    else throw std::invalid_argument("config: unknown key stop." + key);
  }
}

}  // namespace

json config_to_json(const MtaConfig& cfg) {
  json j;
  j["p"] = cfg.p;
  j["q"] = cfg.q;
  j["mode"] = cfg.mode == Mode::kFixed ? "fixed" : "adaptive";
  j["M_p"] = cfg.M_p;
  j["M"] = cfg.M;
  j["M_q"] = cfg.M_q;
  j["M_p0"] = cfg.M_p0;
  j["M_q0"] = cfg.M_q0;
  j["R_p"] = cfg.R_p;
  j["max_doublings"] = cfg.max_doublings;
  j["warm_start"] = cfg.warm_start;
  j["store_iterates"] = cfg.store_iterates;
  j["dual"] = {{"eta1", cfg.dual.eta1},
               {"eta2", cfg.dual.eta2},
               {"eta3", cfg.dual.eta3},
               {"gap_tol", cfg.dual.gap_tol},
               {"max_iters", cfg.dual.max_iters}};
  j["stop"] = {{"f_gap_tol", cfg.stop.f_gap_tol},
               {"violation_tol", cfg.stop.violation_tol},
               {"max_outer_iters", cfg.stop.max_outer_iters},
               {"step_norm_tol", cfg.stop.step_norm_tol},
               {"kkt_tol", cfg.stop.kkt_tol}};
  return j;
}

void apply_config_json(const json& j, MtaConfig& cfg, std::size_t m) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "p") cfg.p = get_int(v, "p");
    else if (key == "q") cfg.q = get_int(v, "q");
    else if (key == "mode") {
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "fixed") cfg.mode = Mode::kFixed;
      else if (s == "adaptive") cfg.mode = Mode::kAdaptive;
      else throw std::invalid_argument("config: mode must be \"fixed\" or \"adaptive\"");
    }
    else if (key == "M_p") cfg.M_p = get_real(v, "M_p");
    else if (key == "M") cfg.M = get_real(v, "M");
    else if (key == "M_q") cfg.M_q = get_per_constraint(v, "M_q", m);
    else if (key == "M_p0") cfg.M_p0 = get_real(v, "M_p0");
    else if (key == "M_q0") cfg.M_q0 = get_per_constraint(v, "M_q0", m);
    else if (key == "R_p") cfg.R_p = get_real(v, "R_p");
    else if (key == "max_doublings") cfg.max_doublings = get_int(v, "max_doublings");
    else if (key == "warm_start") cfg.warm_start = get_bool(v, "warm_start");
    else if (key == "store_iterates") cfg.store_iterates = get_bool(v, "store_iterates");
    else if (key == "dual") apply_dual(v, cfg.dual);
    else if (key == "stop") apply_stop(v, cfg.stop);
    else throw std::invalid_argument("config: unknown key " + key);
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace mta
