#include "dba/problem.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dba/errors.hpp"

namespace dba {

void BaProblem::finalize() {
  const auto n_cams = poses.size();
  if (shared_intrinsics()) {
    if (intrinsics_group.size() != n_cams) {
      throw std::invalid_argument("intrinsics_group must have one entry per camera");
    }
    for (auto g : intrinsics_group) {
      if (g >= intrinsics.size()) {
        throw IndexOutOfRange("intrinsics group " + std::to_string(g) +
                              " out of range");
      }
    }
  } else if (intrinsics.size() != n_cams) {
    throw std::invalid_argument("expected one intrinsics entry per camera");
  }
  for (const auto& in : intrinsics) {
    if (!(in.focal > 0.0)) throw std::invalid_argument("focal length must be > 0");
  }

  point_obs_offsets_.assign(points.size() + 1, 0);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    if (o.camera_id >= n_cams || o.point_id >= points.size()) {
      throw IndexOutOfRange("observation " + std::to_string(i) +
                            " references camera " + std::to_string(o.camera_id) +
                            ", point " + std::to_string(o.point_id));
    }
    ++point_obs_offsets_[o.point_id + 1];
  }
  for (std::size_t p = 0; p < points.size(); ++p) {
    point_obs_offsets_[p + 1] += point_obs_offsets_[p];
  }
  point_obs_.assign(observations.size(), 0);
  std::vector<std::uint32_t> cursor(point_obs_offsets_.begin(),
                                    point_obs_offsets_.end() - 1);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    point_obs_[cursor[observations[i].point_id]++] = static_cast<std::uint32_t>(i);
  }
  // Duplicate (camera, point) pairs are not allowed.
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<std::uint32_t> cams;
    for (auto i : observations_of(static_cast<std::uint32_t>(p))) {
      cams.push_back(observations[i].camera_id);
    }
    std::sort(cams.begin(), cams.end());
    if (std::adjacent_find(cams.begin(), cams.end()) != cams.end()) {
      throw std::invalid_argument("point " + std::to_string(p) +
                                  " observed twice by the same camera");
    }
  }
}

ParameterLayout::ParameterLayout(const BaProblem& problem) {
  const int c = camera_size(problem.model);
  const auto n = problem.num_cameras();
  segments_.resize(n);
  if (!problem.shared_intrinsics()) {
    block_sizes_.assign(n, static_cast<std::uint32_t>(c));
    for (std::uint32_t i = 0; i < n; ++i) segments_[i] = {{i, 0, c}};
    return;
  }
  block_sizes_.assign(n, kPoseSize);
  block_sizes_.resize(n + problem.intrinsics.size(),
                      static_cast<std::uint32_t>(c - kPoseSize));
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto intr_block =
        static_cast<std::uint32_t>(n + problem.intrinsics_group[i]);
    segments_[i] = {{i, 0, kPoseSize}, {intr_block, kPoseSize, c - kPoseSize}};
  }
}

std::vector<std::uint32_t> blocks_of_point(const BaProblem& problem,
                                           const ParameterLayout& layout,
                                           std::uint32_t point) {
  std::vector<std::uint32_t> blocks;
  for (auto i : problem.observations_of(point)) {
    for (const auto& seg : layout.segments(problem.observations[i].camera_id)) {
      blocks.push_back(seg.block);
    }
  }
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

void apply_camera_step(BaProblem& problem, std::span<const std::uint32_t> block_offsets,
                       std::span<const double> delta) {
  const auto n = problem.num_cameras();
  if (!problem.shared_intrinsics()) {
    for (std::uint32_t cam = 0; cam < n; ++cam) {
      auto params = pack_camera(problem.poses[cam], problem.intrinsics[cam]);
      const auto off = block_offsets[cam];
      for (int k = 0; k < camera_size(problem.model); ++k) params[k] += delta[off + k];
      unpack_camera(params, problem.poses[cam], problem.intrinsics[cam]);
    }
    return;
  }
  for (std::uint32_t cam = 0; cam < n; ++cam) {
    const auto off = block_offsets[cam];
    for (int k = 0; k < 3; ++k) {
      problem.poses[cam].rotation[k] += delta[off + k];
      problem.poses[cam].translation[k] += delta[off + 3 + k];
    }
  }
  const int c = camera_size(problem.model);
  for (std::size_t g = 0; g < problem.intrinsics.size(); ++g) {
    auto& in = problem.intrinsics[g];
    CameraPose unused;
    auto params = pack_camera(unused, in);
    const auto off = block_offsets[n + g];
    for (int k = kPoseSize; k < c; ++k) params[k] += delta[off + k - kPoseSize];
    unpack_camera(params, unused, in);
  }
}

}  // namespace dba
