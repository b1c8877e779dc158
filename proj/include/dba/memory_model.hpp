#pragma once

// Memory cost of the CSR and BSMC formats for an n-camera reduced system with
// c unknowns per camera and block sparsity alpha (non-zero blocks / n^2).
// Scalars are 8-byte doubles, ids 4-byte integers.
//
//   csr  = alpha n^2 c^2 8 + alpha n^2 c^2 4 + n c 4
//   bsmc = (alpha n^2 + n)/2 c^2 8 + (alpha n^2 + n)/2 3 4 + n 4
//
// memory_ratio() is the commonly quoted closed form for the ratio:
//   (6 alpha n c^2 + 2c) / (2 alpha n c^2 + 2 c^2 + 3 alpha + 5)
// It differs slightly from csr/bsmc evaluated directly (memory_ratio_exact).

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dba/bsmc.hpp"
#include "dba/csr.hpp"

namespace dba {

/// Throws InvalidSparsity unless n >= 1, c >= 1, alpha in (0, 1] and
/// alpha n^2 >= n.
double memory_bytes_csr(double n, double c, double alpha);
double memory_bytes_bsmc(double n, double c, double alpha);
double memory_ratio(double n, double c, double alpha);
double memory_ratio_exact(double n, double c, double alpha);

/// Packed BSMC variant matching the byte accounting above: per block only
/// (col_id, width, height) and one start index per block row.
struct CompactBsmc {
  std::vector<double> values;
  std::vector<std::uint32_t> col_ids;
  std::vector<std::uint32_t> widths;
  std::vector<std::uint32_t> heights;
  std::vector<std::uint32_t> row_starts;
};

CompactBsmc compact(const BsmcMatrix& m);

/// Bytes held by the arrays of each structure.
std::size_t audited_bytes(const BsmcMatrix& m);
std::size_t audited_bytes(const CompactBsmc& m);
std::size_t audited_bytes(const CsrMatrix& m);

/// Random symmetric block occupancy with exactly alpha n^2 non-zero blocks
/// (diagonal included); returns upper-triangle coordinates. Throws
/// InvalidSparsity when alpha n^2 is not an integer of the parity of n.
std::vector<BlockCoord> random_uniform_structure(std::size_t n, double alpha,
                                                 std::mt19937_64& rng);

}  // namespace dba
