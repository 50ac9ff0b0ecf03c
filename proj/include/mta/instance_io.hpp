#pragma once

#include <filesystem>
#include <json.hpp>

#include "mta/problem.hpp"

namespace mta {

// Document layout: {n, m, seed, family, sigma, kind, a, b, c, d, Q (row-major
// per function), x0, lip_grad, lip_hess, convexity_flag}. Doubles are written
// in shortest round-trip form, so load(save(x)) is bit-exact.
nlohmann::json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::json& j, InstanceChecks checks = {});

void save_instance(const ProblemInstance& inst, const std::filesystem::path& path);
ProblemInstance load_instance(const std::filesystem::path& path, InstanceChecks checks = {});

}  // namespace mta
