#include "dba/partition.hpp"

#include <algorithm>

#include "dba/normal_equations.hpp"

namespace dba {

std::vector<std::vector<std::uint32_t>> PointPartition::groups() const {
  std::vector<std::vector<std::uint32_t>> out(n_groups);
  for (std::uint32_t p = 0; p < assignment.size(); ++p) out[assignment[p]].push_back(p);
  return out;
}

std::vector<std::size_t> PointPartition::group_sizes() const {
  std::vector<std::size_t> sizes(n_groups, 0);
  for (auto g : assignment) ++sizes[g];
  return sizes;
}

PointPartition partition_points(std::size_t n_points, std::uint32_t n_groups) {
  PointPartition part;
  const std::size_t g = std::clamp<std::size_t>(n_groups, 1, std::max<std::size_t>(1, n_points));
  part.n_groups = static_cast<std::uint32_t>(g);
  part.assignment.resize(n_points);
  const std::size_t base = n_points / g;
  const std::size_t extra = n_points % g;
  std::size_t p = 0;
  for (std::size_t k = 0; k < g; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) {
      part.assignment[p++] = static_cast<std::uint32_t>(k);
    }
  }
  return part;
}

std::vector<PartitionStats> partition_stats(const BaProblem& problem,
                                            const PointPartition& partition) {
  const ParameterLayout layout(problem);
  const auto groups = partition.groups();
  std::vector<PartitionStats> out;
  for (std::uint32_t g = 0; g < groups.size(); ++g) {
    PartitionStats s;
    s.group = g;
    s.points = groups[g].size();
    std::vector<std::uint32_t> cams;
    for (auto p : groups[g]) {
      for (auto oi : problem.observations_of(p)) {
        cams.push_back(problem.observations[oi].camera_id);
        ++s.observations;
      }
    }
    std::sort(cams.begin(), cams.end());
    s.cameras = static_cast<std::size_t>(std::unique(cams.begin(), cams.end()) - cams.begin());
    s.rcs_blocks = rcs_structure(problem, layout, groups[g]).size();
    out.push_back(s);
  }
  return out;
}

}  // namespace dba
