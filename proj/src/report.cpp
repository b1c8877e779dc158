#include "dba/report.hpp"

#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dba/normal_equations.hpp"

namespace dba {

ProblemStats describe(const BaProblem& problem) {
  ProblemStats s;
  s.cameras = problem.num_cameras();
  s.points = problem.num_points();
  s.observations = problem.observations.size();
  const ParameterLayout layout(problem);
  std::vector<std::uint32_t> all(problem.num_points());
  std::iota(all.begin(), all.end(), 0u);
  const auto structure = rcs_structure(problem, layout, all);
  s.rcs_blocks = layout.num_blocks();
  // Diagonal blocks are always present in the RCS.
  std::size_t off_diagonal = 0;
  for (const auto& b : structure) off_diagonal += b.row != b.col ? 1 : 0;
  s.upper_blocks = s.rcs_blocks + off_diagonal;
  const double n = static_cast<double>(s.rcs_blocks);
  s.sparsity = n > 0 ? (n + 2.0 * static_cast<double>(off_diagonal)) / (n * n) : 0.0;
  s.mean_views_per_point =
      s.points > 0 ? static_cast<double>(s.observations) / static_cast<double>(s.points) : 0.0;
  return s;
}

double rcs_sparsity(const BaProblem& problem) { return describe(problem).sparsity; }

void write_report(std::ostream& out, const ProblemStats& stats, const RuntimeOptions& runtime,
                  const SolveOutcome& outcome) {
  out << "# problem\n"
      << "cameras = " << stats.cameras << '\n'
      << "points = " << stats.points << '\n'
      << "observations = " << stats.observations << '\n'
      << "rcs_block_rows = " << stats.rcs_blocks << '\n'
      << "rcs_upper_blocks = " << stats.upper_blocks << '\n'
      << "sparsity = " << stats.sparsity << '\n'
      << "# runtime\n"
      << "mode = " << runtime_mode_name(runtime.mode) << '\n'
      << "workers = " << (runtime.mode == RuntimeMode::kSerial ? 0 : runtime.workers) << '\n'
      << "groups = " << outcome.groups << '\n';
  if (runtime.mode != RuntimeMode::kSerial) {
    out << "# messages (count bytes)\n";
    for (std::uint8_t t = 1; t <= kMaxMessageType; ++t) {
      const auto& e = outcome.stats.by_type[t];
      out << "msg_" << message_type_name(static_cast<MessageType>(t)) << " = " << e.count << ' '
          << e.bytes << '\n';
    }
    out << "msg_total_bytes = " << outcome.stats.total_bytes() << '\n';
  }
  out << "# trace\n";
  write_trace(out, outcome.trace);
  out << "# summary\n";
  write_summary(out, outcome.trace);
}

void write_report(const std::string& path, const ProblemStats& stats,
                  const RuntimeOptions& runtime, const SolveOutcome& outcome) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_report(out, stats, runtime, outcome);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace dba
