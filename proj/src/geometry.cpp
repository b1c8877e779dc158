#include "dba/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <limits>

#include "dba/errors.hpp"

namespace dba {
namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace

CameraParams pack_camera(const CameraPose& pose, const CameraIntrinsics& intr) {
  return {pose.rotation.x(), pose.rotation.y(), pose.rotation.z(),
          pose.translation.x(), pose.translation.y(), pose.translation.z(),
          intr.focal, intr.k1, intr.k2, intr.cx, intr.cy};
}

void unpack_camera(const CameraParams& p, CameraPose& pose,
                   CameraIntrinsics& intr) {
  pose.rotation = {p[0], p[1], p[2]};
  pose.translation = {p[3], p[4], p[5]};
  intr.focal = p[6];
  intr.k1 = p[7];
  intr.k2 = p[8];
  intr.cx = p[9];
  intr.cy = p[10];
}

Eigen::Vector3d rotate_point(const Eigen::Vector3d& w, const Eigen::Vector3d& p) {
  const double theta2 = w.squaredNorm();
  if (theta2 > std::numeric_limits<double>::epsilon()) {
    const double theta = std::sqrt(theta2);
    const Eigen::Vector3d k = w / theta;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return p * c + k.cross(p) * s + k * (k.dot(p) * (1.0 - c));
  }
  // First-order expansion; exact to rounding below sqrt(eps).
  return p + w.cross(p);
}

Eigen::Matrix3d rotate_point_jacobian(const Eigen::Vector3d& w,
                                      const Eigen::Vector3d& p) {
  const double theta2 = w.squaredNorm();
  if (theta2 > 1e-10) {
    const double theta = std::sqrt(theta2);
    const Eigen::Vector3d k = w / theta;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const Eigen::Matrix3d kx = skew(k);
    const Eigen::Matrix3d r =
        c * Eigen::Matrix3d::Identity() + s * kx + (1.0 - c) * k * k.transpose();
    // -R [p]x (w w^T + (R^T - I)[w]x) / theta^2
    return -r * skew(p) *
           (w * w.transpose() +
            (r.transpose() - Eigen::Matrix3d::Identity()) * skew(w)) /
           theta2;
  }
  // Second-order expansion around w = 0.
  return -skew(p) + 0.5 * (w.dot(p) * Eigen::Matrix3d::Identity() +
                           w * p.transpose() - 2.0 * p * w.transpose());
}

Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& intr,
                        const Point3D& pt) {
  const Eigen::Vector3d xc = rotate_point(pose.rotation, pt.position) +
                             pose.translation;
  if (std::abs(xc.z()) < kMinDepth) throw DegenerateProjection(xc.z());
  const Eigen::Vector2d p = -xc.head<2>() / xc.z();
  const double r2 = p.squaredNorm();
  const double d = 1.0 + r2 * (intr.k1 + intr.k2 * r2);
  return intr.focal * d * p + Eigen::Vector2d(intr.cx, intr.cy);
}

JacobianPair residual_and_jacobian(const CameraPose& pose,
                                   const CameraIntrinsics& intr,
                                   const Point3D& pt, const Observation& obs,
                                   CameraModel model) {
  const Eigen::Vector3d xc = rotate_point(pose.rotation, pt.position) +
                             pose.translation;
  const double z = xc.z();
  if (std::abs(z) < kMinDepth) throw DegenerateProjection(z);

  const Eigen::Vector2d p = -xc.head<2>() / z;
  const double r2 = p.squaredNorm();
  const double d = 1.0 + r2 * (intr.k1 + intr.k2 * r2);
  const double f = intr.focal;

  JacobianPair out;
  out.residual = f * d * p + Eigen::Vector2d(intr.cx, intr.cy) - obs.pixel;

  // d p / d xc
  Eigen::Matrix<double, 2, 3> dp_dxc;
  dp_dxc << -1.0 / z, 0.0, xc.x() / (z * z), 0.0, -1.0 / z, xc.y() / (z * z);

  // d pixel / d p = f (d I + p (dd/dp)^T), dd/dp = (2 k1 + 4 k2 r2) p
  const double dd_dr2 = intr.k1 + 2.0 * intr.k2 * r2;
  const Eigen::Matrix2d du_dp =
      f * (d * Eigen::Matrix2d::Identity() + 2.0 * dd_dr2 * p * p.transpose());
  const Eigen::Matrix<double, 2, 3> du_dxc = du_dp * dp_dxc;

  const int c = camera_size(model);
  out.j_cam.resize(2, c);
  out.j_cam.block<2, 3>(0, 0) =
      du_dxc * rotate_point_jacobian(pose.rotation, pt.position);
  out.j_cam.block<2, 3>(0, 3) = du_dxc;
  out.j_cam.col(6) = d * p;
  out.j_cam.col(7) = f * r2 * p;
  out.j_cam.col(8) = f * r2 * r2 * p;
  if (model == CameraModel::kFull11) {
    out.j_cam.col(9) = Eigen::Vector2d(1.0, 0.0);
    out.j_cam.col(10) = Eigen::Vector2d(0.0, 1.0);
  }

  // d xc / d X = R; apply R column-wise via the rotation itself.
  Eigen::Matrix3d r;
  for (int k = 0; k < 3; ++k) {
    r.col(k) = rotate_point(pose.rotation, Eigen::Vector3d::Unit(k));
  }
  out.j_pt = du_dxc * r;
  return out;
}

}  // namespace dba
