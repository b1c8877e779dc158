#include "dba/normal_equations.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "dba/errors.hpp"
#include "dba/thread_pool.hpp"

namespace dba {
namespace {

std::uint32_t index_of(const std::vector<std::uint32_t>& blocks, std::uint32_t block) {
  const auto it = std::lower_bound(blocks.begin(), blocks.end(), block);
  return static_cast<std::uint32_t>(it - blocks.begin());
}

Eigen::MatrixXd& u_block(PointSystem& ps, std::uint32_t a, std::uint32_t b,
                         Eigen::Index rows, Eigen::Index cols) {
  for (auto& u : ps.u) {
    if (u.a == a && u.b == b) return u.value;
  }
  ps.u.push_back({a, b, Eigen::MatrixXd::Zero(rows, cols)});
  return ps.u.back().value;
}

double clamp_damping(double d) {
  return std::clamp(d, kMinDampingDiagonal, kMaxDampingDiagonal);
}

BlockLayout block_layout(const ParameterLayout& layout) {
  return BlockLayout(layout.block_sizes());
}

}  // namespace

LossEval evaluate_loss(double squared_norm, double huber_scale) {
  if (huber_scale > 0.0) {
    const double s = std::sqrt(squared_norm);
    if (s > huber_scale) {
      return {2.0 * huber_scale * s - huber_scale * huber_scale, std::sqrt(huber_scale / s)};
    }
  }
  return {squared_norm, 1.0};
}

PointSystem build_point_system(const BaProblem& problem, const ParameterLayout& layout,
                               std::uint32_t point_id, double lambda,
                               const NormalEqOptions& options) {
  PointSystem ps;
  ps.point_id = point_id;
  ps.blocks = blocks_of_point(problem, layout, point_id);
  const auto m = ps.blocks.size();
  const auto& sizes = layout.block_sizes();
  ps.w.resize(m);
  ps.l_c.resize(m);
  ps.jtj_diag.resize(m);
  for (std::size_t a = 0; a < m; ++a) {
    const auto s = sizes[ps.blocks[a]];
    ps.w[a] = Eigen::MatrixXd::Zero(s, 3);
    ps.l_c[a] = Eigen::VectorXd::Zero(s);
    ps.jtj_diag[a] = Eigen::VectorXd::Zero(s);
  }

  const Point3D& pt = problem.points[point_id];
  Eigen::Matrix3d v = Eigen::Matrix3d::Zero();
  std::uint32_t used = 0;
  for (auto oi : problem.observations_of(point_id)) {
    const Observation& obs = problem.observations[oi];
    JacobianPair jp;
    try {
      jp = residual_and_jacobian(problem.poses[obs.camera_id],
                                 problem.intrinsics_of(obs.camera_id), pt, obs,
                                 problem.model);
    } catch (const DegenerateProjection&) {
      ++ps.skipped_observations;
      continue;
    }
    ++used;
    const LossEval loss = evaluate_loss(jp.residual.squaredNorm(), options.huber_scale);
    ps.cost += 0.5 * loss.rho;
    const Eigen::Vector2d e = loss.sqrt_weight * jp.residual;
    const Eigen::Matrix<double, 2, 3> jpt = loss.sqrt_weight * jp.j_pt;
    const CameraJacobian jc = loss.sqrt_weight * jp.j_cam;

    v.noalias() += jpt.transpose() * jpt;
    ps.l_p.noalias() -= jpt.transpose() * e;

    const auto segs = layout.segments(obs.camera_id);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto a = index_of(ps.blocks, segs[s].block);
      const auto ja = jc.middleCols(segs[s].param_begin, segs[s].width);
      ps.w[a].noalias() += ja.transpose() * jpt;
      ps.l_c[a].noalias() -= ja.transpose() * e;
      ps.jtj_diag[a] += ja.colwise().squaredNorm().transpose();
      for (std::size_t t = s; t < segs.size(); ++t) {
        const auto b = index_of(ps.blocks, segs[t].block);
        const auto jb = jc.middleCols(segs[t].param_begin, segs[t].width);
        u_block(ps, a, b, segs[s].width, segs[t].width).noalias() += ja.transpose() * jb;
      }
    }
  }
  if (used == 0) throw EmptyPoint(point_id);

  for (int k = 0; k < 3; ++k) ps.d_squared_pt[k] = clamp_damping(v(k, k));
  ps.v = v;
  ps.v.diagonal() += lambda * ps.d_squared_pt;
  return ps;
}

SchurContribution schur_eliminate(const PointSystem& ps) {
  Eigen::Matrix3d v_inv;
  bool invertible = false;
  double det = 0.0;
  ps.v.computeInverseAndDetWithCheck(v_inv, det, invertible);
  const double cond = invertible ? ps.v.norm() * v_inv.norm()
                                 : std::numeric_limits<double>::infinity();
  if (!invertible || !std::isfinite(cond) || cond > kMaxPointCondition) {
    throw SingularPointBlock(ps.point_id, cond);
  }

  SchurContribution out;
  out.blocks = ps.blocks;
  const auto m = ps.blocks.size();
  std::vector<Eigen::MatrixXd> wv(m);  // W_a V^-1
  out.rhs.resize(m);
  const Eigen::Vector3d v_inv_lp = v_inv * ps.l_p;
  for (std::size_t a = 0; a < m; ++a) {
    wv[a] = ps.w[a] * v_inv;
    out.rhs[a] = ps.l_c[a] - ps.w[a] * v_inv_lp;
  }
  out.entries.reserve(m * (m + 1) / 2);
  for (std::uint32_t a = 0; a < m; ++a) {
    for (std::uint32_t b = a; b < m; ++b) {
      Eigen::MatrixXd s = -wv[a] * ps.w[b].transpose();
      for (const auto& u : ps.u) {
        if (u.a == a && u.b == b) s += u.value;
      }
      out.entries.push_back({a, b, std::move(s)});
    }
  }
  return out;
}

double point_cost(const BaProblem& problem, std::uint32_t point, double huber_scale,
                  std::uint32_t* skipped) {
  double cost = 0.0;
  const Point3D& pt = problem.points[point];
  for (auto oi : problem.observations_of(point)) {
    const Observation& obs = problem.observations[oi];
    Eigen::Vector2d e;
    try {
      e = project(problem.poses[obs.camera_id], problem.intrinsics_of(obs.camera_id), pt) -
          obs.pixel;
    } catch (const DegenerateProjection&) {
      if (skipped) ++*skipped;
      continue;
    }
    cost += 0.5 * evaluate_loss(e.squaredNorm(), huber_scale).rho;
  }
  return cost;
}

std::vector<BlockCoord> rcs_structure(const BaProblem& problem, const ParameterLayout& layout,
                                      std::span<const std::uint32_t> point_ids) {
  std::vector<BlockCoord> coords;
  for (auto p : point_ids) {
    const auto blocks = blocks_of_point(problem, layout, p);
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      for (std::size_t b = a; b < blocks.size(); ++b) coords.push_back({blocks[a], blocks[b]});
    }
    if (coords.size() > (1u << 22)) {
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
  }
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

namespace {

void add_contribution(RcsContribution& acc, const BlockLayout& layout,
                      const SchurContribution& sc) {
  for (const auto& e : sc.entries) {
    const auto k = acc.r.find(sc.blocks[e.a], sc.blocks[e.b]);
    acc.r.block(*k) += e.value;
  }
  for (std::size_t a = 0; a < sc.blocks.size(); ++a) {
    const auto off = layout.offset(sc.blocks[a]);
    for (Eigen::Index j = 0; j < sc.rhs[a].size(); ++j) acc.b[off + j] += sc.rhs[a][j];
  }
}

RcsContribution empty_contribution(const BlockLayout& layout,
                                   const std::vector<BlockCoord>& structure) {
  RcsContribution c;
  c.r = BsmcMatrix::from_structure(layout, structure);
  c.b.assign(layout.total_dim(), 0.0);
  c.jtj_diag.assign(layout.total_dim(), 0.0);
  return c;
}

}  // namespace

void accumulate(RcsContribution& total, RcsContribution&& part) {
  merge_add(total.r, part.r);
  for (std::size_t i = 0; i < total.b.size(); ++i) {
    total.b[i] += part.b[i];
    total.jtj_diag[i] += part.jtj_diag[i];
  }
  total.cost += part.cost;
  total.skipped_observations += part.skipped_observations;
  total.excluded_points.insert(total.excluded_points.end(), part.excluded_points.begin(),
                               part.excluded_points.end());
  std::move(part.point_systems.begin(), part.point_systems.end(),
            std::back_inserter(total.point_systems));
}

RcsContribution form_rcs_contribution(const BaProblem& problem, const ParameterLayout& layout,
                                      std::span<const std::uint32_t> point_ids,
                                      double lambda, const NormalEqOptions& options,
                                      bool keep_point_systems) {
  const BlockLayout blayout = block_layout(layout);
  const auto structure = rcs_structure(problem, layout, point_ids);

  const std::size_t n_chunks =
      std::max<std::size_t>(1, std::min(options.n_threads, point_ids.size()));
  std::vector<RcsContribution> parts(n_chunks);
  auto work = [&](std::size_t chunk) {
    RcsContribution part = empty_contribution(blayout, structure);
    const std::size_t first = point_ids.size() * chunk / n_chunks;
    const std::size_t last = point_ids.size() * (chunk + 1) / n_chunks;
    for (std::size_t i = first; i < last; ++i) {
      const auto p = point_ids[i];
      PointSystem ps;
      try {
        ps = build_point_system(problem, layout, p, lambda, options);
      } catch (const EmptyPoint&) {
        part.excluded_points.push_back(p);
        part.skipped_observations += static_cast<std::uint32_t>(problem.observations_of(p).size());
        continue;
      }
      part.cost += ps.cost;
      part.skipped_observations += ps.skipped_observations;
      try {
        add_contribution(part, blayout, schur_eliminate(ps));
      } catch (const SingularPointBlock&) {
        part.excluded_points.push_back(p);
        continue;
      }
      for (std::size_t a = 0; a < ps.blocks.size(); ++a) {
        const auto off = blayout.offset(ps.blocks[a]);
        for (Eigen::Index j = 0; j < ps.jtj_diag[a].size(); ++j) {
          part.jtj_diag[off + j] += ps.jtj_diag[a][j];
        }
      }
      if (keep_point_systems) part.point_systems.push_back(std::move(ps));
    }
    parts[chunk] = std::move(part);
  };
  if (n_chunks == 1) {
    work(0);
  } else {
    auto& pool = options.pool ? *options.pool : ThreadPool::shared();
    pool.run(n_chunks, work);
  }
  RcsContribution total = std::move(parts[0]);
  for (std::size_t c = 1; c < n_chunks; ++c) accumulate(total, std::move(parts[c]));
  return total;
}

RcsSystem finalize_rcs(RcsContribution&& contribution, double lambda, bool fix_first_block) {
  RcsSystem sys;
  sys.r = std::move(contribution.r);
  sys.b = std::move(contribution.b);
  const auto& layout = sys.r.layout();
  sys.d_squared_cam.resize(contribution.jtj_diag.size());
  for (std::size_t i = 0; i < sys.d_squared_cam.size(); ++i) {
    sys.d_squared_cam[i] = clamp_damping(contribution.jtj_diag[i]);
  }
  for (std::uint32_t i = 0; i < layout.num_blocks(); ++i) {
    auto blk = sys.r.block(*sys.r.find(i, i));
    const auto off = layout.offset(i);
    for (std::uint32_t j = 0; j < layout.size(i); ++j) {
      blk(j, j) += lambda * sys.d_squared_cam[off + j];
    }
  }
  if (fix_first_block && layout.num_blocks() > 0) {
    const auto rs = sys.r.row_starts();
    for (auto k = rs[0]; k < rs[1]; ++k) sys.r.block(k).setZero();
    sys.r.block(rs[0]).setIdentity();
    std::fill(sys.b.begin(), sys.b.begin() + layout.size(0), 0.0);
  }
  sys.preconditioner = BlockJacobiPreconditioner(sys.r);
  return sys;
}

RcsSystem form_rcs(const BaProblem& problem, const ParameterLayout& layout,
                   std::span<const std::uint32_t> point_ids, double lambda,
                   const NormalEqOptions& options, bool fix_first_block) {
  if (point_ids.empty()) throw std::invalid_argument("form_rcs: empty point set");
  auto contribution = form_rcs_contribution(problem, layout, point_ids, lambda, options);
  if (contribution.excluded_points.size() == point_ids.size()) {
    throw AllPointsDegenerate("every point was excluded from the reduced camera system");
  }
  return finalize_rcs(std::move(contribution), lambda, fix_first_block);
}

std::vector<Eigen::Vector3d> back_substitute_points(
    std::span<const PointSystem> point_systems, const BlockLayout& layout,
    std::span<const double> delta_c) {
  if (delta_c.size() != layout.total_dim()) {
    throw DimensionMismatch("back_substitute_points: camera step has wrong dimension");
  }
  std::vector<Eigen::Vector3d> out(point_systems.size());
  for (std::size_t i = 0; i < point_systems.size(); ++i) {
    const auto& ps = point_systems[i];
    Eigen::Vector3d rhs = ps.l_p;
    for (std::size_t a = 0; a < ps.blocks.size(); ++a) {
      const auto off = layout.offset(ps.blocks[a]);
      const Eigen::Map<const Eigen::VectorXd> dc(delta_c.data() + off, ps.w[a].rows());
      rhs.noalias() -= ps.w[a].transpose() * dc;
    }
    Eigen::Matrix3d v_inv;
    bool invertible = false;
    double det = 0.0;
    ps.v.computeInverseAndDetWithCheck(v_inv, det, invertible);
    out[i] = invertible ? Eigen::Vector3d(v_inv * rhs) : Eigen::Vector3d::Zero();
  }
  return out;
}

}  // namespace dba
