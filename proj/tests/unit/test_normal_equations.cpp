#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "dba/errors.hpp"
#include "dba/normal_equations.hpp"
#include "dba/thread_pool.hpp"
#include "test_support.hpp"

namespace dba {
namespace {

using testing::dense_normal_equations;
using testing::dense_rcs;
using testing::random_problem;
using testing::RandomProblemSpec;
using testing::relative_frobenius;

std::vector<std::uint32_t> all_points(const BaProblem& p) {
  std::vector<std::uint32_t> ids(p.num_points());
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

// Problem with a single point taken from `p` (all cameras kept).
BaProblem only_point(const BaProblem& p, std::uint32_t point) {
  BaProblem q = p;
  q.points = {p.points[point]};
  q.observations.clear();
  for (const auto& o : p.observations) {
    if (o.point_id == point) q.observations.push_back({o.camera_id, 0, o.pixel});
  }
  q.finalize();
  return q;
}

BaProblem five_camera_problem() {
  std::mt19937_64 rng(71);
  RandomProblemSpec spec;
  spec.cameras = 5;
  spec.points = 1;
  auto p = random_problem(rng, spec);
  // Point seen only by cameras 1 and 3.
  p.observations.clear();
  for (std::uint32_t c : {1u, 3u}) {
    p.observations.push_back({c, 0, project(p.poses[c], p.intrinsics_of(c), p.points[0]) +
                                        Eigen::Vector2d(0.5, -0.25)});
  }
  p.finalize();
  return p;
}

TEST(Loss, PlainAndHuber) {
  const auto plain = evaluate_loss(9.0, 0.0);
  EXPECT_EQ(plain.rho, 9.0);
  EXPECT_EQ(plain.sqrt_weight, 1.0);
  const auto inlier = evaluate_loss(1.0, 2.0);
  EXPECT_EQ(inlier.rho, 1.0);
  const auto outlier = evaluate_loss(16.0, 2.0);  // |e| = 4
  EXPECT_DOUBLE_EQ(outlier.rho, 2.0 * 2.0 * 4.0 - 4.0);
  EXPECT_DOUBLE_EQ(outlier.sqrt_weight * outlier.sqrt_weight, 0.5);
}

TEST(PointSystem, SingleCameraZeroResidual) {
  std::mt19937_64 rng(72);
  RandomProblemSpec spec;
  spec.cameras = 1;
  spec.points = 1;
  spec.min_views = spec.max_views = 1;
  spec.pixel_noise = 0.0;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  const double lambda = 0.1;
  const auto ps = build_point_system(p, layout, 0, lambda);
  EXPECT_LT(ps.l_p.norm(), 1e-9);
  EXPECT_LT(ps.l_c[0].norm(), 1e-9);
  const auto jp = residual_and_jacobian(p.poses[0], p.intrinsics[0], p.points[0],
                                        p.observations[0], p.model);
  Eigen::Matrix3d v = jp.j_pt.transpose() * jp.j_pt;
  const Eigen::Vector3d d = v.diagonal();
  v.diagonal() += lambda * d;
  EXPECT_LE((ps.v - v).norm() / v.norm(), 1e-14);
}

TEST(PointSystem, KeysAreObservingCameras) {
  const auto p = five_camera_problem();
  const ParameterLayout layout(p);
  const auto ps = build_point_system(p, layout, 0, 1e-3);
  EXPECT_EQ(ps.blocks, (std::vector<std::uint32_t>{1, 3}));
  const auto sc = schur_eliminate(ps);
  std::set<std::pair<std::uint32_t, std::uint32_t>> emitted;
  for (const auto& e : sc.entries) emitted.insert({sc.blocks[e.a], sc.blocks[e.b]});
  EXPECT_EQ(emitted, (std::set<std::pair<std::uint32_t, std::uint32_t>>{{1, 1}, {1, 3}, {3, 3}}));
}

TEST(PointSystem, MatchesDenseJacobianProducts) {
  std::mt19937_64 rng(73);
  for (auto model : {CameraModel::kBal9, CameraModel::kFull11}) {
    RandomProblemSpec spec;
    spec.cameras = 6;
    spec.points = 10;
    spec.model = model;
    const auto p = random_problem(rng, spec);
    const ParameterLayout layout(p);
    const BlockLayout bl(layout.block_sizes());
    for (std::uint32_t k = 0; k < p.num_points(); ++k) {
      const auto ps = build_point_system(p, layout, k, 0.0);
      const auto ne = dense_normal_equations(only_point(p, k));
      const auto nc = static_cast<Eigen::Index>(ne.camera_dim);
      EXPECT_LE((ps.v - ne.h.block<3, 3>(nc, nc)).norm(), 1e-12 * ne.h.norm());
      EXPECT_LE((ps.l_p + ne.g.tail<3>()).norm(), 1e-12 * std::max(1.0, ne.g.norm()));
      for (std::size_t a = 0; a < ps.blocks.size(); ++a) {
        const auto oa = bl.offset(ps.blocks[a]);
        const auto sa = bl.size(ps.blocks[a]);
        EXPECT_LE((ps.w[a] - ne.h.block(oa, nc, sa, 3)).norm(), 1e-12 * ne.h.norm());
        EXPECT_LE((ps.l_c[a] + ne.g.segment(oa, sa)).norm(), 1e-12 * std::max(1.0, ne.g.norm()));
      }
      for (const auto& u : ps.u) {
        const auto ra = ps.blocks[u.a], rb = ps.blocks[u.b];
        const Eigen::MatrixXd ref = ne.h.block(bl.offset(ra), bl.offset(rb), bl.size(ra), bl.size(rb));
        EXPECT_LE((u.value - ref).norm(), 1e-12 * ne.h.norm());
      }
    }
  }
}

TEST(Schur, MatchesDenseSchurOfPoint) {
  std::mt19937_64 rng(74);
  RandomProblemSpec spec;
  spec.cameras = 3;
  spec.points = 20;
  spec.min_views = spec.max_views = 3;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  const BlockLayout bl(layout.block_sizes());
  for (std::uint32_t k = 0; k < p.num_points(); ++k) {
    const auto ps = build_point_system(p, layout, k, 1e-2);
    const auto sc = schur_eliminate(ps);
    Eigen::MatrixXd got = Eigen::MatrixXd::Zero(bl.total_dim(), bl.total_dim());
    for (const auto& e : sc.entries) {
      const auto ra = sc.blocks[e.a], rb = sc.blocks[e.b];
      got.block(bl.offset(ra), bl.offset(rb), bl.size(ra), bl.size(rb)) = e.value;
      got.block(bl.offset(rb), bl.offset(ra), bl.size(rb), bl.size(ra)) = e.value.transpose();
    }
    // Dense: H_cc - H_cp V^-1 H_pc with V damped as the point system does.
    const auto ne = dense_normal_equations(only_point(p, k));
    const auto nc = static_cast<Eigen::Index>(ne.camera_dim);
    Eigen::Matrix3d v = ne.h.block<3, 3>(nc, nc);
    v.diagonal() += 1e-2 * v.diagonal().eval();
    const Eigen::MatrixXd w = ne.h.block(0, nc, nc, 3);
    const Eigen::MatrixXd ref = ne.h.topLeftCorner(nc, nc) - w * v.inverse() * w.transpose();
    EXPECT_LE(relative_frobenius(got, ref), 1e-12);
  }
}

TEST(Schur, EmptyPointThrows) {
  std::mt19937_64 rng(75);
  auto p = random_problem(rng, {});
  // Every camera looks at the point edge-on: depth 0 in camera frame.
  for (auto& pose : p.poses) {
    pose.rotation.setZero();
    pose.translation = Eigen::Vector3d(0, 0, -p.points[0].position.z());
  }
  const ParameterLayout layout(p);
  EXPECT_THROW(build_point_system(p, layout, 0, 1e-3), EmptyPoint);
}

class FormRcs : public ::testing::TestWithParam<std::tuple<CameraModel, std::uint32_t>> {};

TEST_P(FormRcs, MatchesDenseOracle) {
  const auto [model, groups] = GetParam();
  std::mt19937_64 rng(76 + groups);
  for (int t = 0; t < 10; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 4 + t;
    spec.points = 30 + 15 * t;
    spec.model = model;
    spec.intrinsics_groups = groups;
    const auto p = random_problem(rng, spec);
    const ParameterLayout layout(p);
    const double lambda = std::pow(10.0, -4 + t % 5);
    const auto sys = form_rcs(p, layout, all_points(p), lambda);
    const auto ref = dense_rcs(p, lambda);
    EXPECT_LE(relative_frobenius(sys.r.to_dense(), ref.s), 1e-10);
    EXPECT_LE((as_vector(sys.b) - ref.rhs).norm() / ref.rhs.norm(), 1e-10);
    // Preconditioner blocks invert the damped diagonal blocks.
    for (std::uint32_t i = 0; i < layout.num_blocks(); ++i) {
      const Eigen::MatrixXd prod = sys.preconditioner.inverse_block(i) * sys.r.block(*sys.r.find(i, i));
      EXPECT_LE((prod - Eigen::MatrixXd::Identity(prod.rows(), prod.cols())).norm(), 1e-8);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Layouts, FormRcs,
                         ::testing::Values(std::make_tuple(CameraModel::kBal9, 0u),
                                           std::make_tuple(CameraModel::kFull11, 0u),
                                           std::make_tuple(CameraModel::kBal9, 2u),
                                           std::make_tuple(CameraModel::kFull11, 3u)));

TEST(FormRcs, PointwiseAdditivity) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 10; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 10;
    spec.points = 120;
    const auto p = random_problem(rng, spec);
    const ParameterLayout layout(p);
    auto whole = form_rcs_contribution(p, layout, all_points(p), 1e-3);
    auto ids = all_points(p);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t k = 2 + t % 5;
    RcsContribution total;
    for (std::size_t g = 0; g < k; ++g) {
      std::vector<std::uint32_t> part(ids.begin() + ids.size() * g / k,
                                      ids.begin() + ids.size() * (g + 1) / k);
      std::sort(part.begin(), part.end());
      auto c = form_rcs_contribution(p, layout, part, 1e-3);
      if (g == 0) {
        total = std::move(c);
      } else {
        accumulate(total, std::move(c));
      }
    }
    EXPECT_LE(relative_frobenius(total.r.to_dense(), whole.r.to_dense()), 1e-12);
    EXPECT_LE((as_vector(total.b) - as_vector(whole.b)).norm() / as_vector(whole.b).norm(), 1e-12);
    EXPECT_LE((as_vector(total.jtj_diag) - as_vector(whole.jtj_diag)).norm() /
                  as_vector(whole.jtj_diag).norm(),
              1e-12);
    EXPECT_NEAR(total.cost, whole.cost, 1e-12 * whole.cost);
  }
}

TEST(FormRcs, TwoDisjointCliques) {
  std::mt19937_64 rng(78);
  RandomProblemSpec spec;
  spec.cameras = 4;
  spec.points = 2;
  auto p = random_problem(rng, spec);
  p.observations.clear();
  for (auto [c, k] : {std::pair{0u, 0u}, {1u, 0u}, {2u, 1u}, {3u, 1u}}) {
    p.observations.push_back({c, k, project(p.poses[c], p.intrinsics_of(c), p.points[k])});
  }
  p.finalize();
  const ParameterLayout layout(p);
  const auto s = rcs_structure(p, layout, all_points(p));
  EXPECT_EQ(s, (std::vector<BlockCoord>{{0, 0}, {0, 1}, {1, 1}, {2, 2}, {2, 3}, {3, 3}}));
  const auto sys = form_rcs(p, layout, all_points(p), 1e-3);
  EXPECT_EQ(sys.r.structure(), s);
}

TEST(FormRcs, OccupancyIsUnionOfCliques) {
  std::mt19937_64 rng(79);
  RandomProblemSpec spec;
  spec.cameras = 12;
  spec.points = 30;
  spec.max_views = 4;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  std::set<BlockCoord> expect;
  for (std::uint32_t k = 0; k < p.num_points(); ++k) {
    const auto blocks = blocks_of_point(p, layout, k);
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      for (std::size_t b = a; b < blocks.size(); ++b) expect.insert({blocks[a], blocks[b]});
    }
  }
  const auto sys = form_rcs(p, layout, all_points(p), 1e-3);
  const auto got = sys.r.structure();
  EXPECT_EQ(std::set<BlockCoord>(got.begin(), got.end()), expect);
}

TEST(FormRcs, PositiveDefiniteForPositiveLambda) {
  std::mt19937_64 rng(80);
  for (int t = 0; t < 20; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 5 + t;
    spec.points = 40 + 5 * t;
    spec.intrinsics_groups = t % 3 == 0 ? 2 : 0;
    const auto p = random_problem(rng, spec);
    const ParameterLayout layout(p);
    const auto sys = form_rcs(p, layout, all_points(p), 1e-4);
    const Eigen::MatrixXd d = sys.r.to_dense();
    EXPECT_LE((d - d.transpose()).norm(), 1e-12 * d.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(FormRcs, ThreadedFormationMatchesSerial) {
  std::mt19937_64 rng(81);
  RandomProblemSpec spec;
  spec.cameras = 20;
  spec.points = 400;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  ThreadPool pool(4);
  const auto serial = form_rcs(p, layout, all_points(p), 1e-3);
  NormalEqOptions opt;
  opt.n_threads = 4;
  opt.pool = &pool;
  const auto a = form_rcs(p, layout, all_points(p), 1e-3, opt);
  const auto b = form_rcs(p, layout, all_points(p), 1e-3, opt);
  EXPECT_LE(relative_frobenius(a.r.to_dense(), serial.r.to_dense()), 1e-12);
  EXPECT_TRUE(a.r == b.r);
  EXPECT_EQ(a.b, b.b);
}

TEST(FormRcs, SingularPointExcludedButCosted) {
  std::mt19937_64 rng(82);
  RandomProblemSpec spec;
  spec.cameras = 4;
  spec.points = 10;
  auto p = random_problem(rng, spec);
  // Point 0 keeps a single observation: V has rank 2 without damping.
  std::vector<Observation> obs;
  bool kept = false;
  for (const auto& o : p.observations) {
    if (o.point_id != 0 || !kept) obs.push_back(o);
    if (o.point_id == 0) kept = true;
  }
  p.observations = obs;
  p.finalize();
  const ParameterLayout layout(p);
  const auto c = form_rcs_contribution(p, layout, all_points(p), 0.0, {}, true);
  EXPECT_EQ(c.excluded_points, std::vector<std::uint32_t>{0});
  EXPECT_NEAR(c.cost, testing::dense_normal_equations(p).cost, 1e-9 * c.cost);
  EXPECT_EQ(c.point_systems.size(), p.num_points() - 1);
}

TEST(FormRcs, AllPointsDegenerate) {
  std::mt19937_64 rng(83);
  RandomProblemSpec spec;
  spec.cameras = 1;  // every point keeps its single view
  spec.points = 3;
  spec.min_views = spec.max_views = 1;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  EXPECT_THROW(form_rcs(p, layout, all_points(p), 0.0), AllPointsDegenerate);
}

TEST(FormRcs, FixFirstBlock) {
  std::mt19937_64 rng(84);
  const auto p = random_problem(rng, {});
  const ParameterLayout layout(p);
  const auto sys = form_rcs(p, layout, all_points(p), 1e-3, {}, true);
  const auto d = sys.r.to_dense();
  EXPECT_TRUE(d.topLeftCorner(9, 9).isIdentity(0.0));
  EXPECT_EQ(d.block(0, 9, 9, d.cols() - 9).norm(), 0.0);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(sys.b[i], 0.0);
}

TEST(BackSubstitute, ZeroCameraStep) {
  std::mt19937_64 rng(85);
  const auto p = random_problem(rng, {});
  const ParameterLayout layout(p);
  const BlockLayout bl(layout.block_sizes());
  const auto c = form_rcs_contribution(p, layout, all_points(p), 1e-3, {}, true);
  const std::vector<double> zero(bl.total_dim(), 0.0);
  const auto dx = back_substitute_points(c.point_systems, bl, zero);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const Eigen::Vector3d expect = c.point_systems[i].v.inverse() * c.point_systems[i].l_p;
    EXPECT_LE((dx[i] - expect).norm(), 1e-12 * std::max(1.0, expect.norm()));
  }
}

TEST(BackSubstitute, ZeroResidualGivesZeroStep) {
  std::mt19937_64 rng(86);
  RandomProblemSpec spec;
  spec.pixel_noise = 0.0;
  const auto p = random_problem(rng, spec);
  const ParameterLayout layout(p);
  const BlockLayout bl(layout.block_sizes());
  const auto c = form_rcs_contribution(p, layout, all_points(p), 1e-3, {}, true);
  const auto dx = back_substitute_points(c.point_systems, bl, std::vector<double>(bl.total_dim()));
  for (const auto& d : dx) EXPECT_LT(d.norm(), 1e-9);
}

// Solve the RCS densely, back-substitute, and check the full damped normal
// equations (J^T J + lambda D^2) dx = -J^T e.
struct FullStep {
  Eigen::VectorXd dx;
  Eigen::MatrixXd a;
  Eigen::VectorXd rhs;
  Eigen::VectorXd d2;
};

FullStep full_step(const BaProblem& p, double lambda) {
  const ParameterLayout layout(p);
  const BlockLayout bl(layout.block_sizes());
  auto c = form_rcs_contribution(p, layout, all_points(p), lambda, {}, true);
  auto systems = std::move(c.point_systems);
  const auto sys = finalize_rcs(std::move(c), lambda);
  const Eigen::VectorXd dc = sys.r.to_dense().ldlt().solve(as_vector(sys.b));
  const std::vector<double> dcv(dc.data(), dc.data() + dc.size());
  const auto dp = back_substitute_points(systems, bl, dcv);
  const auto ne = dense_normal_equations(p);
  FullStep out;
  out.dx.resize(ne.h.rows());
  out.dx.head(ne.camera_dim) = dc;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    out.dx.segment<3>(ne.camera_dim + 3 * systems[i].point_id) = dp[i];
  }
  out.d2 = ne.h.diagonal().cwiseMax(kMinDampingDiagonal).cwiseMin(kMaxDampingDiagonal);
  out.a = ne.h;
  out.a.diagonal() += lambda * out.d2;
  out.rhs = -ne.g;
  return out;
}

TEST(BackSubstitute, SatisfiesFullNormalEquations) {
  std::mt19937_64 rng(87);
  for (int t = 0; t < 10; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 5 + t;
    spec.points = 50;
    spec.model = t % 2 ? CameraModel::kFull11 : CameraModel::kBal9;
    const auto p = random_problem(rng, spec);
    const auto s = full_step(p, 1e-2);
    EXPECT_LE((s.a * s.dx - s.rhs).norm() / s.rhs.norm(), 1e-8);
  }
}

TEST(BackSubstitute, LargeLambdaFollowsScaledGradient) {
  std::mt19937_64 rng(88);
  for (int t = 0; t < 10; ++t) {
    RandomProblemSpec spec;
    spec.cameras = 6;
    spec.points = 60;
    const auto p = random_problem(rng, spec);
    const auto s = full_step(p, 1e6);
    const Eigen::VectorXd g = s.rhs.cwiseQuotient(s.d2);
    const double cosine = s.dx.dot(g) / (s.dx.norm() * g.norm());
    EXPECT_GT(cosine, 0.99);
  }
}

}  // namespace
}  // namespace dba
