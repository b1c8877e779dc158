#pragma once

#include <cstdint>
#include <vector>

#include "dba/problem.hpp"

namespace dba {

/// Assignment of points to groups.
struct PointPartition {
  std::uint32_t n_groups = 0;
  std::vector<std::uint32_t> assignment;  // per point

  /// Point ids of each group in ascending order.
  std::vector<std::vector<std::uint32_t>> groups() const;
  std::vector<std::size_t> group_sizes() const;
};

/// Splits points 0..P-1 into contiguous ranges whose sizes differ by at most
/// one (larger groups first). n_groups is clamped to [1, P].
PointPartition partition_points(std::size_t n_points, std::uint32_t n_groups);
inline PointPartition partition_points(const BaProblem& problem, std::uint32_t n_groups) {
  return partition_points(problem.num_points(), n_groups);
}

/// Statistics for the `partition` dry run.
struct PartitionStats {
  std::uint32_t group = 0;
  std::size_t points = 0;
  std::size_t observations = 0;
  std::size_t cameras = 0;      // involved cameras
  std::size_t rcs_blocks = 0;   // upper-triangle blocks of the sub-RCS
};
std::vector<PartitionStats> partition_stats(const BaProblem& problem,
                                            const PointPartition& partition);

}  // namespace dba
