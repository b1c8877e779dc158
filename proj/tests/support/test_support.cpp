#include "test_support.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "dba/errors.hpp"
#include "dba/normal_equations.hpp"

namespace dba::testing {

BaProblem random_problem(std::mt19937_64& rng, const RandomProblemSpec& spec) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BaProblem p;
  p.model = spec.model;
  p.poses.resize(spec.cameras);
  for (auto& pose : p.poses) {
    pose.rotation = 0.15 * Eigen::Vector3d(g(rng), g(rng), g(rng));
    pose.translation = Eigen::Vector3d(g(rng), g(rng), -10.0 + 0.5 * g(rng));
  }
  auto random_intrinsics = [&] {
    CameraIntrinsics in;
    in.focal = 500.0 + 100.0 * u(rng);
    in.k1 = 0.1 * u(rng);
    in.k2 = 0.01 * u(rng);
    if (spec.model == CameraModel::kFull11) {
      in.cx = 5.0 * u(rng);
      in.cy = 5.0 * u(rng);
    }
    return in;
  };
  if (spec.intrinsics_groups > 0) {
    for (std::uint32_t k = 0; k < spec.intrinsics_groups; ++k) {
      p.intrinsics.push_back(random_intrinsics());
    }
    for (std::uint32_t i = 0; i < spec.cameras; ++i) {
      p.intrinsics_group.push_back(i % spec.intrinsics_groups);
    }
  } else {
    for (std::uint32_t i = 0; i < spec.cameras; ++i) p.intrinsics.push_back(random_intrinsics());
  }
  p.points.resize(spec.points);
  for (auto& pt : p.points) pt.position = 2.0 * Eigen::Vector3d(u(rng), u(rng), u(rng));

  std::vector<std::vector<std::uint32_t>> seen_by(spec.points);
  std::vector<std::uint32_t> cams(spec.cameras);
  std::iota(cams.begin(), cams.end(), 0u);
  const auto hi = std::min(spec.max_views, spec.cameras);
  const auto lo = std::min(spec.min_views, hi);
  std::uniform_int_distribution<std::uint32_t> n_views(lo, hi);
  std::vector<bool> used(spec.cameras, false);
  for (std::uint32_t pt = 0; pt < spec.points; ++pt) {
    std::shuffle(cams.begin(), cams.end(), rng);
    const auto k = n_views(rng);
    seen_by[pt].assign(cams.begin(), cams.begin() + k);
    for (auto c : seen_by[pt]) used[c] = true;
  }
  if (spec.points > 0) {
    std::uniform_int_distribution<std::uint32_t> any_point(0, spec.points - 1);
    for (std::uint32_t c = 0; c < spec.cameras; ++c) {
      if (!used[c]) seen_by[any_point(rng)].push_back(c);
    }
  }
  for (std::uint32_t pt = 0; pt < spec.points; ++pt) {
    for (auto c : seen_by[pt]) {
      Observation o;
      o.camera_id = c;
      o.point_id = pt;
      o.pixel = project(p.poses[c], p.intrinsics_of(c), p.points[pt]);
      o.pixel += spec.pixel_noise * Eigen::Vector2d(g(rng), g(rng));
      p.observations.push_back(o);
    }
  }
  p.finalize();
  return p;
}

namespace {

BsmcMatrix from_dense(const BlockLayout& layout, const Eigen::MatrixXd& d,
                      const std::vector<BlockCoord>& structure) {
  std::vector<BlockEntry> entries;
  for (const auto& bc : structure) {
    entries.push_back({bc.row, bc.col,
                       d.block(layout.offset(bc.row), layout.offset(bc.col),
                               layout.size(bc.row), layout.size(bc.col))});
  }
  return BsmcMatrix::build(layout, std::move(entries));
}

std::vector<BlockCoord> random_structure(std::mt19937_64& rng, std::size_t n, double prob) {
  std::bernoulli_distribution keep(prob);
  std::vector<BlockCoord> s;
  for (std::uint32_t i = 0; i < n; ++i) {
    s.push_back({i, i});
    for (std::uint32_t j = i + 1; j < n; ++j) {
      if (keep(rng)) s.push_back({i, j});
    }
  }
  return s;
}

Eigen::MatrixXd random_dense_on(std::mt19937_64& rng, const BlockLayout& layout,
                                const std::vector<BlockCoord>& structure) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(layout.total_dim(), layout.total_dim());
  for (const auto& bc : structure) {
    for (std::uint32_t a = 0; a < layout.size(bc.row); ++a) {
      for (std::uint32_t b = 0; b < layout.size(bc.col); ++b) {
        const auto r = layout.offset(bc.row) + a, c = layout.offset(bc.col) + b;
        if (bc.row == bc.col && b < a) continue;
        d(r, c) = d(c, r) = u(rng);
      }
    }
  }
  return d;
}

}  // namespace

BsmcMatrix random_symmetric_bsmc(std::mt19937_64& rng, const BlockLayout& layout,
                                 double off_diagonal_probability) {
  const auto structure = random_structure(rng, layout.num_blocks(), off_diagonal_probability);
  return from_dense(layout, random_dense_on(rng, layout, structure), structure);
}

BsmcMatrix random_spd_bsmc(std::mt19937_64& rng, const BlockLayout& layout,
                           double off_diagonal_probability) {
  const auto structure = random_structure(rng, layout.num_blocks(), off_diagonal_probability);
  Eigen::MatrixXd d = random_dense_on(rng, layout, structure);
  // Strict diagonal dominance makes the matrix SPD.
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    d(i, i) = d.row(i).cwiseAbs().sum() + 1.0;
  }
  return from_dense(layout, d, structure);
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

DenseNormalEquations dense_normal_equations(const BaProblem& problem) {
  const ParameterLayout layout(problem);
  const BlockLayout blocks(layout.block_sizes());
  DenseNormalEquations out;
  out.camera_dim = blocks.total_dim();
  const auto dim = out.camera_dim + 3 * problem.num_points();
  out.h = Eigen::MatrixXd::Zero(dim, dim);
  out.g = Eigen::VectorXd::Zero(dim);
  std::vector<std::size_t> cols;
  for (const auto& obs : problem.observations) {
    JacobianPair jp;
    try {
      jp = residual_and_jacobian(problem.poses[obs.camera_id],
                                 problem.intrinsics_of(obs.camera_id),
                                 problem.points[obs.point_id], obs, problem.model);
    } catch (const DegenerateProjection&) {
      continue;
    }
    // Row of the full Jacobian restricted to its non-zero columns.
    cols.clear();
    Eigen::MatrixXd row(2, camera_size(problem.model) + 3);
    int k = 0;
    for (const auto& seg : layout.segments(obs.camera_id)) {
      for (int j = 0; j < seg.width; ++j) {
        cols.push_back(blocks.offset(seg.block) + j);
        row.col(k++) = jp.j_cam.col(seg.param_begin + j);
      }
    }
    for (int j = 0; j < 3; ++j) {
      cols.push_back(out.camera_dim + 3 * obs.point_id + j);
      row.col(k++) = jp.j_pt.col(j);
    }
    const Eigen::MatrixXd jtj = row.transpose() * row;
    const Eigen::VectorXd jte = row.transpose() * jp.residual;
    for (std::size_t a = 0; a < cols.size(); ++a) {
      out.g[cols[a]] += jte[a];
      for (std::size_t b = 0; b < cols.size(); ++b) out.h(cols[a], cols[b]) += jtj(a, b);
    }
    out.cost += 0.5 * jp.residual.squaredNorm();
  }
  return out;
}

DenseRcs dense_rcs(const BaProblem& problem, double lambda) {
  const auto ne = dense_normal_equations(problem);
  const auto nc = static_cast<Eigen::Index>(ne.camera_dim);
  const auto np = ne.h.rows() - nc;
  Eigen::MatrixXd h = ne.h;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    h(i, i) += lambda * std::clamp(ne.h(i, i), kMinDampingDiagonal, kMaxDampingDiagonal);
  }
  const Eigen::MatrixXd u = h.topLeftCorner(nc, nc);
  const Eigen::MatrixXd w = h.topRightCorner(nc, np);
  Eigen::MatrixXd v_inv = Eigen::MatrixXd::Zero(np, np);
  for (Eigen::Index p = 0; p < np; p += 3) {
    v_inv.block<3, 3>(p, p) = h.block<3, 3>(nc + p, nc + p).inverse();
  }
  DenseRcs out;
  out.s = u - w * v_inv * w.transpose();
  const Eigen::VectorXd l = -ne.g;
  out.rhs = l.head(nc) - w * v_inv * l.tail(np);
  return out;
}

DenseLmResult dense_lm(BaProblem& problem, const LmConfig& config) {
  const ParameterLayout layout(problem);
  const BlockLayout blocks(layout.block_sizes());
  DenseLmResult out;
  double lambda = config.lambda_init;
  double cost = total_cost(problem);
  out.accepted_costs.push_back(cost);
  std::uint32_t rejections = 0;
  for (std::uint32_t it = 0; it < config.max_iterations; ++it) {
    ++out.iterations;
    const auto ne = dense_normal_equations(problem);
    Eigen::MatrixXd a = ne.h;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      a(i, i) += lambda * std::clamp(ne.h(i, i), kMinDampingDiagonal, kMaxDampingDiagonal);
    }
    Eigen::VectorXd rhs = -ne.g;
    if (config.fix_first_camera) {
      const auto s0 = static_cast<Eigen::Index>(blocks.size(0));
      a.topRows(s0).setZero();
      a.leftCols(s0).setZero();
      a.topLeftCorner(s0, s0).setIdentity();
      rhs.head(s0).setZero();
    }
    const Eigen::VectorXd delta = a.ldlt().solve(rhs);
    BaProblem trial = problem;
    const std::vector<double> dc(delta.data(), delta.data() + ne.camera_dim);
    apply_camera_step(trial, blocks.offsets(), dc);
    for (std::size_t p = 0; p < trial.num_points(); ++p) {
      trial.points[p].position += delta.segment<3>(ne.camera_dim + 3 * p);
    }
    const double trial_cost = total_cost(trial);
    if (step_quality_guard(cost, trial_cost)) {
      const double decrease = (cost - trial_cost) / cost;
      problem.poses = trial.poses;
      problem.intrinsics = trial.intrinsics;
      problem.points = trial.points;
      cost = trial_cost;
      out.accepted_costs.push_back(cost);
      lambda /= config.lambda_down;
      rejections = 0;
      if (cost <= config.min_cost || decrease < config.function_tolerance) break;
    } else {
      lambda *= config.lambda_up;
      if (++rejections >= config.max_consecutive_rejections) break;
    }
  }
  out.final_rms = rms_pixels(problem);
  return out;
}

// Dense reference projection via Eigen's AngleAxis rotation matrix.
Eigen::Vector2d reference_project(const CameraPose& pose, const CameraIntrinsics& in,
                                  const Eigen::Vector3d& x) {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  const double angle = pose.rotation.norm();
  if (angle > 0.0) r = Eigen::AngleAxisd(angle, pose.rotation / angle).toRotationMatrix();
  const Eigen::Vector3d xc = r * x + pose.translation;
  const Eigen::Vector2d p = -xc.head<2>() / xc.z();
  const double r2 = p.squaredNorm();
  const double d = 1.0 + in.k1 * r2 + in.k2 * r2 * r2;
  return in.focal * d * p + Eigen::Vector2d(in.cx, in.cy);
}


ProjectionConfig random_config(std::mt19937_64& rng, CameraModel model) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ProjectionConfig c;
  c.pose.rotation = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 1.5;
  c.pose.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));
  c.intr.focal = 300.0 + 400.0 * (u(rng) + 1.0);
  c.intr.k1 = 0.2 * u(rng);
  c.intr.k2 = 0.05 * u(rng);
  if (model == CameraModel::kFull11) {
    c.intr.cx = 20.0 * u(rng);
    c.intr.cy = 20.0 * u(rng);
  }
  // Place the point in front of the camera at depth 3..10 (negative z).
  const Eigen::Vector3d xc(u(rng), u(rng), -6.5 + 3.5 * u(rng));
  const double angle = c.pose.rotation.norm();
  const Eigen::Matrix3d r =
      Eigen::AngleAxisd(angle, c.pose.rotation / angle).toRotationMatrix();
  c.pt.position = r.transpose() * (xc - c.pose.translation);
  c.obs.pixel = reference_project(c.pose, c.intr, c.pt.position) +
                Eigen::Vector2d(5.0 * u(rng), 5.0 * u(rng));
  return c;
}

namespace {

Eigen::Vector2d residual_at(const CameraParams& p, const Eigen::Vector3d& x,
                            const Observation& obs) {
  CameraPose pose;
  CameraIntrinsics intr;
  unpack_camera(p, pose, intr);
  return project(pose, intr, Point3D{x}) - obs.pixel;
}

}  // namespace

// Central differences with a step relative to each parameter's magnitude.
void finite_difference(const ProjectionConfig& c, CameraModel model, Eigen::MatrixXd& jc,
                       Eigen::MatrixXd& jp) {
  const int n = camera_size(model);
  const CameraParams p0 = pack_camera(c.pose, c.intr);
  jc.resize(2, n);
  for (int k = 0; k < n; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(p0[k]));
    CameraParams a = p0, b = p0;
    a[k] += h;
    b[k] -= h;
    jc.col(k) = (residual_at(a, c.pt.position, c.obs) - residual_at(b, c.pt.position, c.obs)) /
                (2.0 * h);
  }
  jp.resize(2, 3);
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(c.pt.position[k]));
    Eigen::Vector3d a = c.pt.position, b = c.pt.position;
    a[k] += h;
    b[k] -= h;
    jp.col(k) = (residual_at(p0, a, c.obs) - residual_at(p0, b, c.obs)) / (2.0 * h);
  }
}

}  // namespace dba::testing
