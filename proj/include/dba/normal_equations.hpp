#pragma once

// Point-wise assembly of the damped normal equations and Schur elimination of
// the point unknowns.
//
// For every point k the observations contribute J_c^T J_c (U), J_c^T J_p (W),
// J_p^T J_p (V), -J_c^T e (l_c) and -J_p^T e (l_p). Eliminating the point
// leaves a dense contribution  U_k - W_k V_k^-1 W_k^T  on the clique of camera
// blocks that observe it, and  l_c - W_k V_k^-1 l_p  on the right-hand side.
// Summing these over points gives the reduced camera system exactly, which is
// what allows the formation to be split across workers by point groups.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "dba/bsmc.hpp"
#include "dba/pcg.hpp"
#include "dba/problem.hpp"

namespace dba {

class ThreadPool;

inline constexpr double kMinDampingDiagonal = 1e-12;
inline constexpr double kMaxDampingDiagonal = 1e12;
inline constexpr double kMaxPointCondition = 1e12;

struct NormalEqOptions {
  /// Huber loss scale in pixels; <= 0 selects plain least squares.
  double huber_scale = 0.0;
  /// Threads used for formation; partial systems are merged in thread order.
  std::size_t n_threads = 1;
  ThreadPool* pool = nullptr;
};

/// Robust-loss weighting of one residual.
struct LossEval {
  double rho;          // loss value, equals |e|^2 without a robust loss
  double sqrt_weight;  // factor applied to residual and Jacobian
};
LossEval evaluate_loss(double squared_norm, double huber_scale);

/// Normal-equation fragments of one point.
struct PointSystem {
  std::uint32_t point_id = 0;
  std::vector<std::uint32_t> blocks;  // sorted RCS blocks touched
  Eigen::Matrix3d v = Eigen::Matrix3d::Zero();  // damped
  Eigen::Vector3d d_squared_pt = Eigen::Vector3d::Zero();
  std::vector<Eigen::MatrixXd> w;  // per entry of `blocks`: size x 3
  struct UBlock {
    std::uint32_t a, b;  // indices into `blocks`, a <= b
    Eigen::MatrixXd value;
  };
  std::vector<UBlock> u;
  Eigen::Vector3d l_p = Eigen::Vector3d::Zero();
  std::vector<Eigen::VectorXd> l_c;
  std::vector<Eigen::VectorXd> jtj_diag;  // undamped diag(J_c^T J_c) per block
  double cost = 0.0;
  std::uint32_t skipped_observations = 0;
};

/// Accumulates the point's observations. Degenerate projections are skipped
/// and counted; throws EmptyPoint when none remain.
PointSystem build_point_system(const BaProblem& problem, const ParameterLayout& layout,
                               std::uint32_t point_id, double lambda,
                               const NormalEqOptions& options = {});

/// Dense Schur contribution of one point over its block clique.
struct SchurContribution {
  std::vector<std::uint32_t> blocks;
  struct Entry {
    std::uint32_t a, b;  // indices into `blocks`, a <= b
    Eigen::MatrixXd value;
  };
  std::vector<Entry> entries;
  std::vector<Eigen::VectorXd> rhs;
};

/// Throws SingularPointBlock when cond(V) exceeds kMaxPointCondition.
SchurContribution schur_eliminate(const PointSystem& ps);

/// Half the robust squared reprojection error of a point's observations;
/// degenerate observations are skipped and counted in `skipped`.
double point_cost(const BaProblem& problem, std::uint32_t point, double huber_scale,
                  std::uint32_t* skipped = nullptr);

/// Union of the covisibility cliques of the given points (upper triangle).
std::vector<BlockCoord> rcs_structure(const BaProblem& problem, const ParameterLayout& layout,
                                      std::span<const std::uint32_t> point_ids);

/// Sum of point contributions before camera damping. This is the quantity a
/// worker ships for its point group.
struct RcsContribution {
  BsmcMatrix r;
  std::vector<double> b;
  std::vector<double> jtj_diag;
  double cost = 0.0;
  std::vector<std::uint32_t> excluded_points;  // singular V, or no usable observation
  std::uint32_t skipped_observations = 0;
  /// Retained only when requested, for back-substitution.
  std::vector<PointSystem> point_systems;
};

RcsContribution form_rcs_contribution(const BaProblem& problem, const ParameterLayout& layout,
                                      std::span<const std::uint32_t> point_ids,
                                      double lambda, const NormalEqOptions& options = {},
                                      bool keep_point_systems = false);

/// Adds `part` into `total` (layouts must match).
void accumulate(RcsContribution& total, RcsContribution&& part);

struct RcsSystem {
  BsmcMatrix r;
  std::vector<double> b;
  std::vector<double> d_squared_cam;
  BlockJacobiPreconditioner preconditioner;
};

/// Applies lambda * clamp(diag(J_c^T J_c)) to the diagonal, optionally pins
/// block 0 (gauge fixing), and builds the preconditioner.
RcsSystem finalize_rcs(RcsContribution&& contribution, double lambda,
                       bool fix_first_block = false);

/// Serial reference: contribution over `point_ids` followed by finalize_rcs.
RcsSystem form_rcs(const BaProblem& problem, const ParameterLayout& layout,
                   std::span<const std::uint32_t> point_ids, double lambda,
                   const NormalEqOptions& options = {}, bool fix_first_block = false);

/// Solves V dx_p = l_p - W^T dx_c for each point system. Points whose V is
/// singular get a zero step.
std::vector<Eigen::Vector3d> back_substitute_points(
    std::span<const PointSystem> point_systems, const BlockLayout& layout,
    std::span<const double> delta_c);

}  // namespace dba
