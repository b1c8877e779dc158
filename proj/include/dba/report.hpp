#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "dba/backends.hpp"
#include "dba/problem.hpp"

namespace dba {

/// Structurally non-zero RCS blocks (both triangles, diagonal included) over
/// the square of the block count.
double rcs_sparsity(const BaProblem& problem);

struct ProblemStats {
  std::size_t cameras = 0;
  std::size_t points = 0;
  std::size_t observations = 0;
  std::size_t rcs_blocks = 0;      // block rows of the RCS
  std::size_t upper_blocks = 0;    // stored (upper-triangle) blocks
  double sparsity = 0.0;
  double mean_views_per_point = 0.0;
};
ProblemStats describe(const BaProblem& problem);

/// Run report: problem statistics, runtime, message accounting, the
/// per-iteration trace and the key = value summary block.
void write_report(std::ostream& out, const ProblemStats& stats, const RuntimeOptions& runtime,
                  const SolveOutcome& outcome);
void write_report(const std::string& path, const ProblemStats& stats,
                  const RuntimeOptions& runtime, const SolveOutcome& outcome);

}  // namespace dba
