#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mta/mta.hpp"

namespace mta {

// Columns, in order: k,F,max_violation,step_norm,kkt_measure,mult_norm,
// dual_iters,doublings,wall_ms. Reals use 17 significant digits.
inline constexpr const char* kTraceHeader =
    "k,F,max_violation,step_norm,kkt_measure,mult_norm,dual_iters,doublings,wall_ms";

void write_trace_csv(const MtaTrace& trace, std::ostream& out);
void save_trace_csv(const MtaTrace& trace, const std::filesystem::path& path);

// Reads the columns above back into rows; x, u and the status are not stored
// in the CSV. Throws std::runtime_error on a malformed file.
MtaTrace read_trace_csv(std::istream& in);
MtaTrace load_trace_csv(const std::filesystem::path& path);

// 17 significant digits, as used in every machine-readable file.
std::string format_real(double v);

}  // namespace mta
