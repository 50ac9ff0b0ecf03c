#include "mta/trace_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mta {

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

void write_trace_csv(const MtaTrace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.rows) {
    out << r.k << ',' << format_real(r.F) << ',' << format_real(r.max_violation) << ','
        << format_real(r.step_norm) << ',' << format_real(r.kkt_measure) << ','
        << format_real(r.mult_norm) << ',' << r.dual_iters << ',' << r.doublings << ','
        << format_real(r.wall_ms) << '\n';
  }
}

void save_trace_csv(const MtaTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trace_csv(trace, out);
}

MtaTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw std::runtime_error("trace CSV header does not match");
  }
  MtaTrace trace;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 9) {
      throw std::runtime_error(fmt::format("trace CSV line {}: expected 9 columns", line_no));
    }
    try {
      TraceRow r;
      r.k = std::stoi(cells[0]);
      r.F = std::stod(cells[1]);
      r.max_violation = std::stod(cells[2]);
      r.step_norm = std::stod(cells[3]);
      r.kkt_measure = std::stod(cells[4]);
      r.mult_norm = std::stod(cells[5]);
      r.dual_iters = std::stoi(cells[6]);
      r.doublings = std::stoi(cells[7]);
      r.wall_ms = std::stod(cells[8]);
      trace.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error(fmt::format("trace CSV line {}: bad number", line_no));
    }
  }
  if (trace.rows.empty()) throw std::runtime_error("trace CSV has no rows");
  return trace;
}

MtaTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_trace_csv(in);
}

}  // namespace mta
