#pragma once

// Scalar compressed-sparse-row reference format. Both triangles are stored.
// Following the classic three-array layout, `row_starts` has one entry per
// scalar row; the end of the last row is values.size().

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dba/bsmc.hpp"

namespace dba {

struct CsrMatrix {
  std::size_t n_rows = 0;
  std::vector<double> values;
  std::vector<std::uint32_t> col_ids;
  std::vector<std::uint32_t> row_starts;

  std::size_t row_end(std::size_t r) const {
    return r + 1 < n_rows ? row_starts[r + 1] : values.size();
  }

  /// Expands every stored block (and its mirror) of a BSMC matrix.
  static CsrMatrix from_bsmc(const BsmcMatrix& m);

  std::vector<double> mat_vec(std::span<const double> x) const;

  /// Element lookup by binary search within a row.
  std::optional<double> get(std::uint32_t row, std::uint32_t col,
                            std::size_t* comparisons = nullptr) const;

  Eigen::MatrixXd to_dense() const;
};

}  // namespace dba
