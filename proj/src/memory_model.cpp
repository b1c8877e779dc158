#include "dba/memory_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dba/errors.hpp"

namespace dba {
namespace {

void validate(double n, double c, double alpha) {
  if (!(n >= 1.0) || !(c >= 1.0)) throw InvalidSparsity("n and c must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidSparsity("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (alpha * n * n < n * (1.0 - 1e-12)) {
    throw InvalidSparsity("alpha n^2 < n: the diagonal blocks alone exceed the sparsity");
  }
}

}  // namespace

double memory_bytes_csr(double n, double c, double alpha) {
  validate(n, c, alpha);
  const double nnz_blocks = alpha * n * n;
  return nnz_blocks * c * c * 8.0 + nnz_blocks * c * c * 4.0 + n * c * 4.0;
}

double memory_bytes_bsmc(double n, double c, double alpha) {
  validate(n, c, alpha);
  const double upper = (alpha * n * n + n) / 2.0;
  return upper * c * c * 8.0 + upper * 3.0 * 4.0 + n * 4.0;
}

double memory_ratio(double n, double c, double alpha) {
  validate(n, c, alpha);
  return (6.0 * alpha * n * c * c + 2.0 * c) /
         (2.0 * alpha * n * c * c + 2.0 * c * c + 3.0 * alpha + 5.0);
}

double memory_ratio_exact(double n, double c, double alpha) {
  return memory_bytes_csr(n, c, alpha) / memory_bytes_bsmc(n, c, alpha);
}

CompactBsmc compact(const BsmcMatrix& m) {
  CompactBsmc out;
  out.values.assign(m.values().begin(), m.values().end());
  out.col_ids.reserve(m.num_blocks());
  out.widths.reserve(m.num_blocks());
  out.heights.reserve(m.num_blocks());
  for (const auto& b : m.meta()) {
    out.col_ids.push_back(b.col);
    out.widths.push_back(b.width);
    out.heights.push_back(b.height);
  }
  const auto rs = m.row_starts();
  out.row_starts.assign(rs.begin(), rs.end() - 1);
  return out;
}

std::size_t audited_bytes(const BsmcMatrix& m) {
  return m.values().size() * sizeof(double) + m.num_blocks() * sizeof(BlockMeta) +
         m.row_starts().size() * sizeof(std::uint32_t) +
         m.layout().sizes().size() * sizeof(std::uint32_t) +
         (m.num_blocks() + 1) * sizeof(std::size_t);
}

std::size_t audited_bytes(const CompactBsmc& m) {
  return m.values.size() * sizeof(double) +
         (m.col_ids.size() + m.widths.size() + m.heights.size() + m.row_starts.size()) *
             sizeof(std::uint32_t);
}

std::size_t audited_bytes(const CsrMatrix& m) {
  return m.values.size() * sizeof(double) +
         (m.col_ids.size() + m.row_starts.size()) * sizeof(std::uint32_t);
}

std::vector<BlockCoord> random_uniform_structure(std::size_t n, double alpha,
                                                 std::mt19937_64& rng) {
  validate(static_cast<double>(n), 1.0, alpha);
  const double total = alpha * static_cast<double>(n) * static_cast<double>(n);
  const auto nnz = static_cast<std::size_t>(std::llround(total));
  if (std::abs(total - static_cast<double>(nnz)) > 1e-6 || (nnz - n) % 2 != 0) {
    throw InvalidSparsity("alpha n^2 must be an integer with the parity of n");
  }
  const std::size_t off_pairs = (nnz - n) / 2;
  const std::size_t all_pairs = n * (n - 1) / 2;
  // Choose off-diagonal pairs uniformly without replacement.
  std::vector<std::size_t> ids(all_pairs);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(off_pairs);
  for (std::size_t k = 0; k < off_pairs; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, all_pairs - 1);
    std::swap(ids[k], ids[pick(rng)]);
    chosen.push_back(ids[k]);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<BlockCoord> coords;
  coords.reserve(off_pairs + n);
  for (std::uint32_t i = 0; i < n; ++i) coords.push_back({i, i});
  // Pair index -> (row, col) in row-major upper-triangle order.
  std::size_t row = 0, row_first = 0, row_len = n - 1;
  for (auto id : chosen) {
    while (id >= row_first + row_len) {
      row_first += row_len;
      ++row;
      --row_len;
    }
    const auto col = row + 1 + (id - row_first);
    coords.push_back({static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col)});
  }
  return coords;
}

}  // namespace dba
