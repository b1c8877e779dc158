#include "dba/csr.hpp"

#include <algorithm>
#include <string>

#include "dba/errors.hpp"

namespace dba {

CsrMatrix CsrMatrix::from_bsmc(const BsmcMatrix& m) {
  const auto& layout = m.layout();
  const auto n_block_rows = layout.num_blocks();
  // Block columns present in each block row, both triangles.
  std::vector<std::vector<std::uint32_t>> row_blocks(n_block_rows);
  for (std::size_t k = 0; k < m.num_blocks(); ++k) {
    const auto& b = m.meta()[k];
    row_blocks[b.row].push_back(static_cast<std::uint32_t>(k));
    if (b.row != b.col) row_blocks[b.col].push_back(static_cast<std::uint32_t>(k));
  }
  auto other = [&](std::uint32_t br, std::uint32_t k) {
    const auto& b = m.meta()[k];
    return b.row == br ? b.col : b.row;
  };
  for (std::uint32_t br = 0; br < n_block_rows; ++br) {
    std::sort(row_blocks[br].begin(), row_blocks[br].end(),
              [&](auto a, auto b) { return other(br, a) < other(br, b); });
  }

  CsrMatrix csr;
  csr.n_rows = layout.total_dim();
  csr.row_starts.reserve(csr.n_rows);
  std::size_t nnz = 0;
  for (std::uint32_t br = 0; br < n_block_rows; ++br) {
    for (auto k : row_blocks[br]) nnz += std::size_t{layout.size(br)} * layout.size(other(br, k));
  }
  csr.values.reserve(nnz);
  for (std::uint32_t br = 0; br < n_block_rows; ++br) {
    for (std::uint32_t i = 0; i < layout.size(br); ++i) {
      csr.row_starts.push_back(static_cast<std::uint32_t>(csr.values.size()));
      for (auto k : row_blocks[br]) {
        const auto& b = m.meta()[k];
        const auto blk = m.block(k);
        const auto bc = other(br, k);
        const auto c0 = layout.offset(bc);
        for (std::uint32_t j = 0; j < layout.size(bc); ++j) {
          csr.values.push_back(b.row == br ? blk(i, j) : blk(j, i));
          csr.col_ids.push_back(c0 + j);
        }
      }
    }
  }
  return csr;
}

std::vector<double> CsrMatrix::mat_vec(std::span<const double> x) const {
  if (x.size() != n_rows) {
    throw DimensionMismatch("csr mat_vec: expected " + std::to_string(n_rows) + " entries");
  }
  std::vector<double> y(n_rows, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    double s = 0.0;
    for (std::size_t k = row_starts[r]; k < row_end(r); ++k) s += values[k] * x[col_ids[k]];
    y[r] = s;
  }
  return y;
}

std::optional<double> CsrMatrix::get(std::uint32_t row, std::uint32_t col,
                                     std::size_t* comparisons) const {
  if (row >= n_rows || col >= n_rows) throw IndexOutOfRange("csr get: index out of range");
  std::size_t lo = row_starts[row];
  std::size_t hi = row_end(row);
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (comparisons) ++*comparisons;
    const auto cmp = col_ids[mid] <=> col;
    if (cmp == 0) return values[mid];
    if (cmp < 0) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return std::nullopt;
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
  const auto n = static_cast<Eigen::Index>(n_rows);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t k = row_starts[r]; k < row_end(r); ++k) d(r, col_ids[k]) = values[k];
  }
  return d;
}

}  // namespace dba
