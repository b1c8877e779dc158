#pragma once

// Preconditioned conjugate gradients on a BSMC matrix with a block-Jacobi
// (inverted diagonal blocks) preconditioner.

#include <cstddef>
#include <span>
#include <vector>

#include "dba/bsmc.hpp"

namespace dba {

class ThreadPool;

class BlockJacobiPreconditioner {
 public:
  BlockJacobiPreconditioner() = default;
  /// Inverts every diagonal block. Throws SingularDiagonalBlock.
  explicit BlockJacobiPreconditioner(const BsmcMatrix& r);

  /// z = M^-1 r
  void apply(std::span<const double> r, std::span<double> z) const;

  const BlockLayout& layout() const { return layout_; }
  const RowMatrix& inverse_block(std::size_t i) const { return inverse_[i]; }
  bool empty() const { return inverse_.empty(); }

 private:
  BlockLayout layout_;
  std::vector<RowMatrix> inverse_;
};

inline BlockJacobiPreconditioner build_preconditioner(const BsmcMatrix& r) {
  return BlockJacobiPreconditioner(r);
}

struct PcgConfig {
  double rel_tolerance = 1e-6;
  /// 0 selects min(2 x block rows, 1000).
  std::size_t max_iterations = 0;
  std::size_t n_groups = 1;
  ThreadPool* pool = nullptr;
  /// Disables the preconditioner (plain CG), for comparisons.
  bool use_preconditioner = true;
};

enum class PcgStatus { kConverged, kZeroRhs, kMaxIterations, kIndefinite };

struct PcgReport {
  PcgStatus status = PcgStatus::kConverged;
  std::size_t iterations = 0;
  /// sqrt(r^T M^-1 r) / sqrt(b^T M^-1 b) at the returned iterate.
  double final_relative_residual = 0.0;
  /// ||r|| / ||b|| from the recursively updated residual.
  double recursive_residual = 0.0;
  bool converged() const {
    return status == PcgStatus::kConverged || status == PcgStatus::kZeroRhs;
  }
};

struct PcgResult {
  std::vector<double> y;
  PcgReport report;
};

/// Solves R y = b from y = 0. On kMaxIterations or kIndefinite the best
/// iterate so far is returned together with the report.
PcgResult pcg_solve(const BsmcMatrix& r, std::span<const double> b,
                    const BlockJacobiPreconditioner& precond, const PcgConfig& config);

}  // namespace dba
