#include "dba/bsmc.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "dba/errors.hpp"
#include "dba/kernels.hpp"
#include "dba/thread_pool.hpp"

namespace dba {
namespace {

constexpr std::size_t kMaxIndex = std::numeric_limits<std::int32_t>::max();

void check_index_limit(std::size_t n, const char* what) {
  if (n > kMaxIndex) {
    throw IndexOverflow(std::string(what) + " exceeds 2^31 - 1: " + std::to_string(n));
  }
}

std::string coord_str(std::uint32_t r, std::uint32_t c) {
  return "(" + std::to_string(r) + ", " + std::to_string(c) + ")";
}

}  // namespace

BlockLayout::BlockLayout(std::vector<std::uint32_t> sizes) : sizes_(std::move(sizes)) {
  check_index_limit(sizes_.size(), "block count");
  offsets_.resize(sizes_.size() + 1);
  std::size_t total = 0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] == 0) throw std::invalid_argument("block size must be >= 1");
    offsets_[i] = static_cast<std::uint32_t>(total);
    total += sizes_[i];
    check_index_limit(total, "total dimension");
  }
  offsets_.back() = static_cast<std::uint32_t>(total);
}

BlockLayout BlockLayout::uniform(std::size_t n_blocks, std::uint32_t size) {
  return BlockLayout(std::vector<std::uint32_t>(n_blocks, size));
}

void BsmcMatrix::index_values() {
  value_offsets_.resize(meta_.size() + 1);
  std::size_t off = 0;
  for (std::size_t k = 0; k < meta_.size(); ++k) {
    value_offsets_[k] = off;
    off += static_cast<std::size_t>(meta_[k].width) * meta_[k].height;
  }
  value_offsets_.back() = off;
}

BsmcMatrix assemble_bsmc(BlockLayout layout, std::vector<BlockMeta> meta,
                         std::vector<std::uint32_t> row_starts,
                         std::vector<double> values) {
  const std::size_t n = layout.num_blocks();
  check_index_limit(meta.size(), "stored block count");
  if (row_starts.size() != n + 1) throw std::invalid_argument("row_starts size mismatch");
  if (row_starts.front() != 0 || row_starts.back() != meta.size()) {
    throw std::invalid_argument("row_starts does not span the block list");
  }
  std::size_t expected_values = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto first = row_starts[r];
    const auto last = row_starts[r + 1];
    if (last < first) throw std::invalid_argument("row_starts not monotone");
    if (first == last || meta[first].col != r) {
      throw std::invalid_argument("missing diagonal block " + std::to_string(r));
    }
    for (auto k = first; k < last; ++k) {
      const auto& b = meta[k];
      if (b.row != r) throw std::invalid_argument("block row id disagrees with row_starts");
      if (b.col >= n) throw std::invalid_argument("block column out of range");
      if (b.col < b.row) throw std::invalid_argument("block in lower triangle");
      if (k > first && meta[k - 1].col >= b.col) {
        throw std::invalid_argument("column ids not strictly increasing in row " +
                                    std::to_string(r));
      }
      if (b.height != layout.size(b.row) || b.width != layout.size(b.col)) {
        throw std::invalid_argument("block shape disagrees with layout at " +
                                    coord_str(b.row, b.col));
      }
      expected_values += static_cast<std::size_t>(b.width) * b.height;
    }
  }
  if (values.size() != expected_values) throw std::invalid_argument("value count mismatch");

  BsmcMatrix m;
  m.layout_ = std::move(layout);
  m.meta_ = std::move(meta);
  m.row_starts_ = std::move(row_starts);
  m.values_ = std::move(values);
  m.index_values();
  return m;
}

BsmcMatrix BsmcMatrix::from_structure(const BlockLayout& layout,
                                      std::vector<BlockCoord> coords) {
  const auto n = static_cast<std::uint32_t>(layout.num_blocks());
  for (auto& c : coords) {
    if (c.row >= n || c.col >= n) {
      throw IndexOutOfRange("block " + coord_str(c.row, c.col) + " outside layout of " +
                            std::to_string(n) + " blocks");
    }
    if (c.row > c.col) std::swap(c.row, c.col);
  }
  for (std::uint32_t i = 0; i < n; ++i) coords.push_back({i, i});
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

  BsmcMatrix m;
  m.layout_ = layout;
  m.meta_.reserve(coords.size());
  check_index_limit(coords.size(), "stored block count");
  m.row_starts_.assign(n + 1, 0);
  for (const auto& c : coords) {
    m.meta_.push_back({c.col, c.row, layout.size(c.col), layout.size(c.row)});
    ++m.row_starts_[c.row + 1];
  }
  for (std::uint32_t r = 0; r < n; ++r) m.row_starts_[r + 1] += m.row_starts_[r];
  m.index_values();
  m.values_.assign(m.value_offsets_.back(), 0.0);
  return m;
}

BsmcMatrix BsmcMatrix::build(const BlockLayout& layout, std::vector<BlockEntry> blocks) {
  std::vector<BlockCoord> coords;
  coords.reserve(blocks.size());
  const auto n = layout.num_blocks();
  for (auto& b : blocks) {
    if (b.row >= n || b.col >= n) {
      throw IndexOutOfRange("block " + coord_str(b.row, b.col) + " outside layout");
    }
    if (b.row > b.col) {
      std::swap(b.row, b.col);
      b.value.transposeInPlace();
    }
    if (static_cast<std::size_t>(b.value.rows()) != layout.size(b.row) ||
        static_cast<std::size_t>(b.value.cols()) != layout.size(b.col)) {
      throw DimensionMismatch("block " + coord_str(b.row, b.col) + " has shape " +
                              std::to_string(b.value.rows()) + "x" +
                              std::to_string(b.value.cols()) + ", layout expects " +
                              std::to_string(layout.size(b.row)) + "x" +
                              std::to_string(layout.size(b.col)));
    }
    coords.push_back({b.row, b.col});
  }
  {
    auto sorted = coords;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("duplicate block position");
    }
  }
  BsmcMatrix m = from_structure(layout, std::move(coords));
  for (const auto& b : blocks) {
    m.block(*m.find(b.row, b.col)) = b.value;
  }
  return m;
}

Eigen::Map<RowMatrix> BsmcMatrix::block(std::size_t k) {
  return {values_.data() + value_offsets_[k], meta_[k].height, meta_[k].width};
}

Eigen::Map<const RowMatrix> BsmcMatrix::block(std::size_t k) const {
  return {values_.data() + value_offsets_[k], meta_[k].height, meta_[k].width};
}

std::optional<std::size_t> BsmcMatrix::find(std::uint32_t row, std::uint32_t col,
                                            std::size_t* comparisons) const {
  const auto n = layout_.num_blocks();
  if (row >= n || col >= n) {
    throw IndexOutOfRange("block " + coord_str(row, col) + " outside layout of " +
                          std::to_string(n) + " blocks");
  }
  if (row > col) std::swap(row, col);
  // Three-way binary search over the row's column ids: at most
  // floor(log2 s) + 1 probes for s stored blocks.
  std::size_t lo = row_starts_[row];
  std::size_t hi = row_starts_[row + 1];
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (comparisons) ++*comparisons;
    const auto cmp = meta_[mid].col <=> col;
    if (cmp == 0) return mid;
    if (cmp < 0) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return std::nullopt;
}

std::optional<BlockRef> BsmcMatrix::get_block(std::uint32_t row, std::uint32_t col,
                                              std::size_t* comparisons) const {
  const auto k = find(row, col, comparisons);
  if (!k) return std::nullopt;
  return BlockRef{block(*k), row > col, *k};
}

void BsmcMatrix::mat_vec_range(std::span<const double> x, std::span<double> y,
                               std::size_t first, std::size_t last) const {
  const auto& off = layout_.offsets();
  for (std::size_t k = first; k < last; ++k) {
    const auto& b = meta_[k];
    const double* a = values_.data() + value_offsets_[k];
    kernels::gemv_add(a, b.height, b.width, x.data() + off[b.col], y.data() + off[b.row]);
    if (b.col != b.row) {
      kernels::gemv_t_add(a, b.height, b.width, x.data() + off[b.row],
                          y.data() + off[b.col]);
    }
  }
}

std::vector<double> BsmcMatrix::mat_vec(std::span<const double> x) const {
  if (x.size() != layout_.total_dim()) {
    throw DimensionMismatch("mat_vec: vector has " + std::to_string(x.size()) +
                            " entries, matrix dimension is " +
                            std::to_string(layout_.total_dim()));
  }
  std::vector<double> y(x.size(), 0.0);
  mat_vec_range(x, y, 0, meta_.size());
  return y;
}

std::vector<double> BsmcMatrix::mat_vec_parallel(std::span<const double> x,
                                                 std::size_t n_groups,
                                                 ThreadPool* pool) const {
  if (n_groups <= 1 || meta_.size() <= 1) return mat_vec(x);
  if (x.size() != layout_.total_dim()) {
    throw DimensionMismatch("mat_vec_parallel: vector has " + std::to_string(x.size()) +
                            " entries, matrix dimension is " +
                            std::to_string(layout_.total_dim()));
  }
  n_groups = std::min(n_groups, meta_.size());
  // Split by stored value count so groups carry similar work.
  std::vector<std::size_t> bounds(n_groups + 1, meta_.size());
  bounds[0] = 0;
  const std::size_t total = value_offsets_.back();
  std::size_t k = 0;
  for (std::size_t g = 1; g < n_groups; ++g) {
    const std::size_t target = total * g / n_groups;
    while (k < meta_.size() && value_offsets_[k] < target) ++k;
    bounds[g] = std::max(k, bounds[g - 1]);
  }
  std::vector<std::vector<double>> partial(n_groups, std::vector<double>(x.size(), 0.0));
  auto& workers = pool ? *pool : ThreadPool::shared();
  workers.run(n_groups, [&](std::size_t g) {
    mat_vec_range(x, partial[g], bounds[g], bounds[g + 1]);
  });
  std::vector<double> y = std::move(partial[0]);
  for (std::size_t g = 1; g < n_groups; ++g) kernels::axpy(1.0, partial[g], y);
  return y;
}

Eigen::MatrixXd BsmcMatrix::to_dense() const {
  const auto dim = static_cast<Eigen::Index>(layout_.total_dim());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t k = 0; k < meta_.size(); ++k) {
    const auto& b = meta_[k];
    const auto r0 = layout_.offset(b.row);
    const auto c0 = layout_.offset(b.col);
    d.block(r0, c0, b.height, b.width) = block(k);
    if (b.row != b.col) d.block(c0, r0, b.width, b.height) = block(k).transpose();
  }
  return d;
}

void BsmcMatrix::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

std::vector<BlockCoord> BsmcMatrix::structure() const {
  std::vector<BlockCoord> out;
  out.reserve(meta_.size());
  for (const auto& b : meta_) out.push_back({b.row, b.col});
  return out;
}

GlobalIdAnnotation annotate(const BsmcMatrix& m,
                            std::span<const std::uint32_t> local_to_global) {
  if (local_to_global.size() != m.num_block_rows()) {
    throw DimensionMismatch("local-to-global map has " +
                            std::to_string(local_to_global.size()) +
                            " entries, matrix has " + std::to_string(m.num_block_rows()) +
                            " block rows");
  }
  GlobalIdAnnotation a;
  a.col_row.reserve(m.num_blocks());
  for (const auto& b : m.meta()) {
    a.col_row.emplace_back(local_to_global[b.col], local_to_global[b.row]);
  }
  return a;
}

void merge_add(BsmcMatrix& target, const BsmcMatrix& contribution,
               const GlobalIdAnnotation* ids) {
  const auto& tl = target.layout();
  const auto n = tl.num_blocks();
  if (!ids && !(tl == contribution.layout())) {
    throw DimensionMismatch("merge_add: layouts differ and no id map was given");
  }
  if (ids && ids->col_row.size() != contribution.num_blocks()) {
    throw DimensionMismatch("merge_add: annotation covers " +
                            std::to_string(ids->col_row.size()) + " blocks, contribution has " +
                            std::to_string(contribution.num_blocks()));
  }

  // Resolve global coordinates and check shapes before touching the target.
  std::vector<BlockCoord> global(contribution.num_blocks());
  std::vector<BlockCoord> missing;
  const auto meta = contribution.meta();
  for (std::size_t k = 0; k < meta.size(); ++k) {
    BlockCoord g{meta[k].row, meta[k].col};
    if (ids) {
      g = {ids->col_row[k].second, ids->col_row[k].first};
      if (g.row >= n || g.col >= n) {
        throw UnknownGlobalId("merge_add: global block " + coord_str(g.row, g.col) +
                              " outside target layout of " + std::to_string(n) + " blocks");
      }
    }
    if (tl.size(g.row) != meta[k].height || tl.size(g.col) != meta[k].width) {
      throw DimensionMismatch("merge_add: block " + coord_str(g.row, g.col) +
                              " shape disagrees with target layout");
    }
    global[k] = g;
    if (!target.find(g.row, g.col)) missing.push_back(g);
  }

  if (!missing.empty()) {
    auto coords = target.structure();
    coords.insert(coords.end(), missing.begin(), missing.end());
    BsmcMatrix grown = BsmcMatrix::from_structure(tl, std::move(coords));
    for (std::size_t k = 0; k < target.num_blocks(); ++k) {
      const auto& b = target.meta()[k];
      grown.block(*grown.find(b.row, b.col)) = target.block(k);
    }
    target = std::move(grown);
  }

  for (std::size_t k = 0; k < meta.size(); ++k) {
    const auto& g = global[k];
    const auto idx = *target.find(g.row, g.col);
    if (g.row <= g.col) {
      target.block(idx) += contribution.block(k);
    } else {
      target.block(idx) += contribution.block(k).transpose();
    }
  }
}

}  // namespace dba
