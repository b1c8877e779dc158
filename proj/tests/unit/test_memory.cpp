#include <gtest/gtest.h>

#include <random>

#include "dba/errors.hpp"
#include "dba/memory_model.hpp"

namespace dba {
namespace {

// Independent evaluation of the byte counts from first principles: nnz
// scalars with their column ids plus one start per scalar row (CSR); upper
// blocks with (col, width, height) plus one start per block row (BSMC).
double oracle_csr(double n, double c, double alpha) {
  const double nnz = alpha * n * n * c * c;
  return nnz * 8 + nnz * 4 + n * c * 4;
}
double oracle_bsmc(double n, double c, double alpha) {
  const double blocks = (alpha * n * n - n) / 2 + n;
  return blocks * c * c * 8 + blocks * 3 * 4 + n * 4;
}

TEST(MemoryFormulas, ClosedFormsMatchFirstPrinciples) {
  for (double n : {10.0, 100.0, 1000.0}) {
    for (double c : {6.0, 9.0, 11.0}) {
      for (double alpha : {0.1, 0.5, 1.0}) {
        EXPECT_DOUBLE_EQ(memory_bytes_csr(n, c, alpha), oracle_csr(n, c, alpha));
        EXPECT_DOUBLE_EQ(memory_bytes_bsmc(n, c, alpha), oracle_bsmc(n, c, alpha));
      }
    }
  }
}

TEST(MemoryFormulas, RatioReferenceExamples) {
  // Reference values are truncated to three decimals.
  EXPECT_NEAR(memory_ratio(10000, 11, 0.04), 2.992, 1e-3);
  EXPECT_NEAR(memory_ratio(10, 11, 1.0), 2.727, 1e-3);
}

TEST(MemoryFormulas, ClosedFormTracksByteRatio) {
  // The closed form is not algebraically equal to csr/bsmc but tracks it at
  // scale.
  for (double n : {1e4, 5e4, 2e5}) {
    for (double alpha : {0.01, 0.04, 0.2}) {
      EXPECT_NEAR(memory_ratio(n, 11, alpha), memory_ratio_exact(n, 11, alpha), 0.05);
    }
  }
}

TEST(MemoryFormulas, RatioEnvelopeOverGrid) {
  for (double n = 1e4; n <= 2e5; n += 1e4) {
    for (double alpha : {0.01, 0.02, 0.04, 0.08, 0.1, 0.15, 0.2}) {
      const double r = memory_ratio(n, 11, alpha);
      EXPECT_GT(r, 1.0);
      EXPECT_LT(r, 3.2);
    }
  }
}

TEST(MemoryFormulas, InvalidSparsity) {
  EXPECT_THROW(memory_ratio(10, 11, 0.0), InvalidSparsity);
  EXPECT_THROW(memory_ratio(10, 11, 1.5), InvalidSparsity);
  EXPECT_THROW(memory_ratio(10, 11, 0.05), InvalidSparsity);  // below diagonal-only 0.1
  EXPECT_THROW(memory_bytes_csr(0, 11, 0.5), InvalidSparsity);
}

TEST(UniformStructure, ExactOccupancy) {
  std::mt19937_64 rng(51);
  const auto s = random_uniform_structure(100, 0.2, rng);
  EXPECT_EQ(s.size(), (2000u - 100u) / 2 + 100u);
  for (const auto& bc : s) EXPECT_LE(bc.row, bc.col);
  EXPECT_THROW(random_uniform_structure(10, 0.15, rng), InvalidSparsity);  // 15 - 10 odd
}

class AuditedBytes : public ::testing::TestWithParam<std::tuple<int, int, double>> {};

TEST_P(AuditedBytes, EqualsClosedForms) {
  const auto [n, c, alpha] = GetParam();
  std::mt19937_64 rng(52);
  const auto s = random_uniform_structure(n, alpha, rng);
  const auto m = BsmcMatrix::from_structure(BlockLayout::uniform(n, c), s);
  EXPECT_EQ(static_cast<double>(audited_bytes(compact(m))), memory_bytes_bsmc(n, c, alpha));
  EXPECT_EQ(static_cast<double>(audited_bytes(CsrMatrix::from_bsmc(m))),
            memory_bytes_csr(n, c, alpha));
  // The self-describing layout costs more than the packed one.
  EXPECT_GT(audited_bytes(m), audited_bytes(compact(m)));
}

INSTANTIATE_TEST_SUITE_P(Grid, AuditedBytes,
                         ::testing::Values(std::make_tuple(100, 9, 0.2),
                                           std::make_tuple(10, 11, 1.0),
                                           std::make_tuple(50, 6, 0.04),
                                           std::make_tuple(200, 11, 0.04),
                                           std::make_tuple(1, 9, 1.0)));

TEST(Compact, SingleCameraRowStarts) {
  const auto m = BsmcMatrix::from_structure(BlockLayout({2}), {});
  const auto cm = compact(m);
  EXPECT_EQ(cm.row_starts, std::vector<std::uint32_t>{0});
  EXPECT_EQ(cm.col_ids.size(), 1u);
}

}  // namespace
}  // namespace dba
