#pragma once

// Block-based sparse matrix compression (BSMC) for symmetric block matrices.
//
// Only the upper triangle is stored, one dense block at a time. Blocks are
// kept in lexicographic (row, col) order; each block carries its position and
// shape, and `row_starts` indexes the first stored block of every block row,
// so a block lookup is a binary search over one row.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dba {

class ThreadPool;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unknown counts per block and their scalar offsets.
class BlockLayout {
 public:
  BlockLayout() = default;
  /// Throws std::invalid_argument for zero sizes, IndexOverflow when the
  /// total dimension exceeds 2^31 - 1.
  explicit BlockLayout(std::vector<std::uint32_t> sizes);

  static BlockLayout uniform(std::size_t n_blocks, std::uint32_t size);

  std::size_t num_blocks() const { return sizes_.size(); }
  std::uint32_t size(std::size_t i) const { return sizes_[i]; }
  std::uint32_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t total_dim() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const std::vector<std::uint32_t>& sizes() const { return sizes_; }
  /// num_blocks() + 1 entries; the last one is total_dim().
  const std::vector<std::uint32_t>& offsets() const { return offsets_; }

  friend bool operator==(const BlockLayout& a, const BlockLayout& b) {
    return a.sizes_ == b.sizes_;
  }

 private:
  std::vector<std::uint32_t> sizes_;
  std::vector<std::uint32_t> offsets_;
};

struct BlockMeta {
  std::uint32_t col;
  std::uint32_t row;
  std::uint32_t width;
  std::uint32_t height;
  friend bool operator==(const BlockMeta&, const BlockMeta&) = default;
};

struct BlockCoord {
  std::uint32_t row;
  std::uint32_t col;
  friend auto operator<=>(const BlockCoord&, const BlockCoord&) = default;
};

struct BlockEntry {
  std::uint32_t row;
  std::uint32_t col;
  Eigen::MatrixXd value;
};

/// A stored block as seen from the requested (row, col) position. When the
/// request hit the lower triangle, `transposed` is set and dense() returns
/// the transpose of the stored upper block.
struct BlockRef {
  Eigen::Map<const RowMatrix> stored;
  bool transposed;
  std::size_t index;
  Eigen::MatrixXd dense() const {
    return transposed ? Eigen::MatrixXd(stored.transpose()) : Eigen::MatrixXd(stored);
  }
};

/// Global (col, row) ids of each block of a matrix whose own ids are local.
struct GlobalIdAnnotation {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> col_row;
  friend bool operator==(const GlobalIdAnnotation&, const GlobalIdAnnotation&) = default;
};

class BsmcMatrix {
 public:
  BsmcMatrix() = default;

  /// Canonical matrix from blocks given in any order. Lower-triangle entries
  /// are transposed into the upper triangle; absent diagonal blocks are
  /// inserted as zeros. Throws DimensionMismatch, IndexOutOfRange, or
  /// std::invalid_argument for duplicated positions.
  static BsmcMatrix build(const BlockLayout& layout, std::vector<BlockEntry> blocks);

  /// Zero-valued matrix with the given structure (duplicates and lower
  /// triangle coordinates allowed) plus all diagonal blocks.
  static BsmcMatrix from_structure(const BlockLayout& layout,
                                   std::vector<BlockCoord> coords);

  const BlockLayout& layout() const { return layout_; }
  std::size_t num_blocks() const { return meta_.size(); }
  std::size_t num_block_rows() const { return layout_.num_blocks(); }
  std::span<const BlockMeta> meta() const { return meta_; }
  /// num_block_rows() + 1 entries.
  std::span<const std::uint32_t> row_starts() const { return row_starts_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t value_offset(std::size_t k) const { return value_offsets_[k]; }

  Eigen::Map<RowMatrix> block(std::size_t k);
  Eigen::Map<const RowMatrix> block(std::size_t k) const;

  /// Index of the stored block holding (row, col), mirrored to the upper
  /// triangle. `comparisons`, when given, is incremented once per block-id
  /// comparison. Throws IndexOutOfRange.
  std::optional<std::size_t> find(std::uint32_t row, std::uint32_t col,
                                  std::size_t* comparisons = nullptr) const;

  std::optional<BlockRef> get_block(std::uint32_t row, std::uint32_t col,
                                    std::size_t* comparisons = nullptr) const;

  /// Full symmetric product. Throws DimensionMismatch.
  std::vector<double> mat_vec(std::span<const double> x) const;

  /// Same product with the blocks split into `n_groups` contiguous groups,
  /// each accumulating into a private vector; the group vectors are summed
  /// in ascending group order. n_groups == 1 is bit-identical to mat_vec.
  std::vector<double> mat_vec_parallel(std::span<const double> x, std::size_t n_groups,
                                       ThreadPool* pool = nullptr) const;

  /// y += this * x over blocks [first, last).
  void mat_vec_range(std::span<const double> x, std::span<double> y,
                     std::size_t first, std::size_t last) const;

  Eigen::MatrixXd to_dense() const;
  void set_zero();

  std::vector<BlockCoord> structure() const;

  friend bool operator==(const BsmcMatrix& a, const BsmcMatrix& b) {
    return a.layout_ == b.layout_ && a.meta_ == b.meta_ &&
           a.row_starts_ == b.row_starts_ && a.values_ == b.values_;
  }

 private:
  friend BsmcMatrix assemble_bsmc(BlockLayout, std::vector<BlockMeta>,
                                  std::vector<std::uint32_t>, std::vector<double>);
  void index_values();

  BlockLayout layout_;
  std::vector<BlockMeta> meta_;
  std::vector<std::uint32_t> row_starts_;
  std::vector<double> values_;
  std::vector<std::size_t> value_offsets_;
};

/// Builds a matrix from already-canonical arrays, validating every invariant.
/// Throws std::invalid_argument describing the first violation.
BsmcMatrix assemble_bsmc(BlockLayout layout, std::vector<BlockMeta> meta,
                         std::vector<std::uint32_t> row_starts,
                         std::vector<double> values);

/// Annotation mapping each block of `m` through a local -> global block map.
GlobalIdAnnotation annotate(const BsmcMatrix& m,
                            std::span<const std::uint32_t> local_to_global);

/// target += contribution. With `ids`, contribution block k is added at the
/// global position ids->col_row[k] (transposed if that lands in the lower
/// triangle). Missing target blocks are inserted first. Throws
/// DimensionMismatch or UnknownGlobalId.
void merge_add(BsmcMatrix& target, const BsmcMatrix& contribution,
               const GlobalIdAnnotation* ids = nullptr);

}  // namespace dba
