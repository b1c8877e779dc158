#pragma once

// Binary stream format for BSMC matrices (little-endian):
//
//   "BSMC" | version u32 | n_blocks u32 | n_block_rows u32 | total_dim u32 |
//   flags u32 (bit 0: global-id annotation present) |
//   block sizes (n_block_rows x u32) | row_starts ((n_block_rows + 1) x u32) |
//   block meta (n_blocks x {col, row, width, height} u32) |
//   values (sum of block areas x f64) |
//   [annotation (n_blocks x {col, row} u32)] |
//   CRC32 of all preceding bytes (u32)

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dba/bsmc.hpp"

namespace dba {

inline constexpr std::uint32_t kBsmcFormatVersion = 1;

std::vector<std::uint8_t> serialize(const BsmcMatrix& m,
                                    const GlobalIdAnnotation* annotation = nullptr);

struct DeserializedBsmc {
  BsmcMatrix matrix;
  std::optional<GlobalIdAnnotation> annotation;
};

/// Throws CorruptStream (with byte offset) on any malformed input.
/// `base_offset` is added to reported offsets when the stream is embedded.
DeserializedBsmc deserialize(std::span<const std::uint8_t> bytes,
                             std::size_t base_offset = 0);

}  // namespace dba
