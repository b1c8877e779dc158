#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dba/geometry.hpp"

namespace dba {

/// Cameras, points and observations of a bundle-adjustment problem.
///
/// Two intrinsics layouts are supported. Per-image (the default, BAL data):
/// `intrinsics` has one entry per camera and `intrinsics_group` is empty.
/// Shared: `intrinsics_group[i]` selects the entry of `intrinsics` used by
/// camera i, and exterior and interior unknowns become separate blocks.
struct BaProblem {
  CameraModel model = CameraModel::kBal9;
  std::vector<CameraPose> poses;
  std::vector<CameraIntrinsics> intrinsics;
  std::vector<std::uint32_t> intrinsics_group;
  std::vector<Point3D> points;
  std::vector<Observation> observations;

  std::size_t num_cameras() const { return poses.size(); }
  std::size_t num_points() const { return points.size(); }
  bool shared_intrinsics() const { return !intrinsics_group.empty(); }

  const CameraIntrinsics& intrinsics_of(std::uint32_t camera) const {
    return shared_intrinsics() ? intrinsics[intrinsics_group[camera]]
                               : intrinsics[camera];
  }

  /// Validates indices and rebuilds the point -> observations index.
  /// Throws IndexOutOfRange or std::invalid_argument.
  void finalize();

  /// Observation indices of a point (requires finalize()).
  std::span<const std::uint32_t> observations_of(std::uint32_t point) const {
    return {point_obs_.data() + point_obs_offsets_[point],
            point_obs_offsets_[point + 1] - point_obs_offsets_[point]};
  }

 private:
  std::vector<std::uint32_t> point_obs_offsets_;
  std::vector<std::uint32_t> point_obs_;
};

/// One contiguous run of a camera's parameters that lives in an RCS block.
struct CameraSegment {
  std::uint32_t block;
  int param_begin;  // first camera parameter index (0..c-1)
  int width;
};

/// Maps camera parameters onto the unknown blocks of the reduced camera
/// system. Per-image mode: block i = camera i with c unknowns. Shared mode:
/// blocks [0, n_cams) are 6-wide exterior blocks followed by one (c-6)-wide
/// interior block per intrinsics group.
class ParameterLayout {
 public:
  explicit ParameterLayout(const BaProblem& problem);

  std::size_t num_blocks() const { return block_sizes_.size(); }
  const std::vector<std::uint32_t>& block_sizes() const { return block_sizes_; }
  std::span<const CameraSegment> segments(std::uint32_t camera) const {
    const auto& s = segments_[camera];
    return {s.data(), s.size()};
  }
  std::size_t num_segments(std::uint32_t camera) const {
    return segments_[camera].size();
  }

 private:
  std::vector<std::uint32_t> block_sizes_;
  std::vector<std::vector<CameraSegment>> segments_;
};

/// Sorted, unique RCS blocks touched by the observations of a point.
std::vector<std::uint32_t> blocks_of_point(const BaProblem& problem,
                                           const ParameterLayout& layout,
                                           std::uint32_t point);

/// Applies a step expressed in RCS block coordinates to the cameras.
/// `block_offsets` are the scalar offsets of each block.
void apply_camera_step(BaProblem& problem, std::span<const std::uint32_t> block_offsets,
                       std::span<const double> delta);

}  // namespace dba
