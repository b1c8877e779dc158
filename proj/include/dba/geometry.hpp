#pragma once

// Camera models, reprojection residuals and analytic Jacobians.
//
// Projection follows the BAL convention: X_cam = R(w) X + t, p = -X_cam.xy /
// X_cam.z, d = 1 + k1 |p|^2 + k2 |p|^4, pixel = f d p (+ principal point in the
// 11-parameter model). Camera parameters are ordered
//   [w(3), t(3), f, k1, k2]            for CameraModel::kBal9
//   [w(3), t(3), f, k1, k2, cx, cy]    for CameraModel::kFull11

#include <Eigen/Core>
#include <array>
#include <cstdint>

namespace dba {

enum class CameraModel : std::uint8_t { kBal9 = 9, kFull11 = 11 };

constexpr int kPoseSize = 6;
constexpr int kMaxCameraSize = 11;

constexpr int camera_size(CameraModel model) { return static_cast<int>(model); }

/// Exterior orientation; rotation is an angle-axis vector in radians.
struct CameraPose {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct CameraIntrinsics {
  double focal = 1.0;
  double k1 = 0.0;
  double k2 = 0.0;
  // Only estimated in the 11-parameter model; zero for BAL data.
  double cx = 0.0;
  double cy = 0.0;
};

struct Point3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct Observation {
  std::uint32_t camera_id = 0;
  std::uint32_t point_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

using CameraJacobian =
    Eigen::Matrix<double, 2, Eigen::Dynamic, Eigen::RowMajor, 2, kMaxCameraSize>;
using PointJacobian = Eigen::Matrix<double, 2, 3, Eigen::RowMajor>;

struct JacobianPair {
  CameraJacobian j_cam;  // 2 x c
  PointJacobian j_pt;
  Eigen::Vector2d residual;  // predicted - observed
};

using CameraParams = std::array<double, kMaxCameraSize>;

CameraParams pack_camera(const CameraPose& pose, const CameraIntrinsics& intr);
void unpack_camera(const CameraParams& params, CameraPose& pose,
                   CameraIntrinsics& intr);

/// Rotates a point by an angle-axis vector (Rodrigues).
Eigen::Vector3d rotate_point(const Eigen::Vector3d& angle_axis,
                             const Eigen::Vector3d& p);

/// d(R(w) p)/dw, evaluated at w.
Eigen::Matrix3d rotate_point_jacobian(const Eigen::Vector3d& angle_axis,
                                      const Eigen::Vector3d& p);

/// Depth magnitude below which a projection is rejected.
inline constexpr double kMinDepth = 1e-12;

/// Throws DegenerateProjection when |depth| < kMinDepth.
Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& intr,
                        const Point3D& pt);

JacobianPair residual_and_jacobian(const CameraPose& pose,
                                   const CameraIntrinsics& intr,
                                   const Point3D& pt, const Observation& obs,
                                   CameraModel model);

}  // namespace dba
