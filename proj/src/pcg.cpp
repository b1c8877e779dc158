#include "dba/pcg.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <string>

#include "dba/errors.hpp"
#include "dba/kernels.hpp"

namespace dba {

BlockJacobiPreconditioner::BlockJacobiPreconditioner(const BsmcMatrix& r)
    : layout_(r.layout()) {
  const auto n = layout_.num_blocks();
  inverse_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto k = r.find(i, i);
    if (!k) throw SingularDiagonalBlock(i);
    const Eigen::MatrixXd d = r.block(*k);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
    if (!lu.isInvertible() || !d.allFinite()) throw SingularDiagonalBlock(i);
    inverse_[i] = lu.inverse();
    if (!inverse_[i].allFinite()) throw SingularDiagonalBlock(i);
  }
}

void BlockJacobiPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  std::fill(z.begin(), z.end(), 0.0);
  for (std::size_t i = 0; i < inverse_.size(); ++i) {
    const auto off = layout_.offset(i);
    const auto s = layout_.size(i);
    kernels::gemv_add(inverse_[i].data(), s, s, r.data() + off, z.data() + off);
  }
}

PcgResult pcg_solve(const BsmcMatrix& r, std::span<const double> b,
                    const BlockJacobiPreconditioner& precond, const PcgConfig& config) {
  const std::size_t n = r.layout().total_dim();
  if (b.size() != n) {
    throw DimensionMismatch("pcg: rhs has " + std::to_string(b.size()) +
                            " entries, matrix dimension is " + std::to_string(n));
  }
  const bool use_m = config.use_preconditioner && !precond.empty();
  auto apply_m = [&](std::span<const double> in, std::span<double> out) {
    if (use_m) {
      precond.apply(in, out);
    } else {
      std::copy(in.begin(), in.end(), out.begin());
    }
  };
  const std::size_t max_iter =
      config.max_iterations > 0
          ? config.max_iterations
          : std::min<std::size_t>(2 * r.num_block_rows(), 1000);

  PcgResult out;
  out.y.assign(n, 0.0);
  std::vector<double> res(b.begin(), b.end());
  std::vector<double> z(n), p(n);
  apply_m(res, z);
  double rz = kernels::dot(res, z);
  const double b_norm = std::sqrt(kernels::dot(b, b));
  const double rz0 = rz;
  if (b_norm == 0.0 || rz0 == 0.0) {
    out.report.status = PcgStatus::kZeroRhs;
    return out;
  }
  p = z;

  auto& rep = out.report;
  rep.status = PcgStatus::kMaxIterations;
  rep.final_relative_residual = 1.0;
  rep.recursive_residual = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const std::vector<double> q = r.mat_vec_parallel(p, config.n_groups, config.pool);
    const double pq = kernels::dot(p, q);
    if (!(pq > 0.0)) {
      rep.status = PcgStatus::kIndefinite;
      return out;
    }
    const double alpha = rz / pq;
    kernels::axpy(alpha, p, out.y);
    kernels::axpy(-alpha, q, res);
    apply_m(res, z);
    const double rz_next = kernels::dot(res, z);
    rep.iterations = it + 1;
    rep.final_relative_residual = std::sqrt(std::max(rz_next, 0.0) / rz0);
    rep.recursive_residual = std::sqrt(kernels::dot(res, res)) / b_norm;
    if (rep.final_relative_residual <= config.rel_tolerance) {
      rep.status = PcgStatus::kConverged;
      return out;
    }
    const double beta = rz_next / rz;
    rz = rz_next;
    kernels::xpby(z, beta, p);
  }
  return out;
}

}  // namespace dba
