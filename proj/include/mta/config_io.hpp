#pragma once

#include <filesystem>
#include <json.hpp>

#include "mta/mta.hpp"

namespace mta {

// Keys mirror MtaConfig: p, q, mode ("fixed" | "adaptive"), M_p, M, M_q,
// M_p0, M_q0, R_p, max_doublings, warm_start, store_iterates, and the nested
// objects dual {eta1, eta2, eta3, gap_tol, max_iters} and stop {f_gap_tol,
// violation_tol, max_outer_iters, step_norm_tol, kkt_tol}.
nlohmann::json config_to_json(const MtaConfig& cfg);

// Overwrites the fields present in j. M_q and M_q0 accept a number (applied to
// every constraint) or an array of length m. Unknown keys and wrongly typed
// values throw std::invalid_argument.
void apply_config_json(const nlohmann::json& j, MtaConfig& cfg, std::size_t m);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace mta
