#include "dba/bsmc_io.hpp"

#include <stdexcept>

#include "dba/byte_io.hpp"
#include "dba/errors.hpp"

namespace dba {

std::vector<std::uint8_t> serialize(const BsmcMatrix& m,
                                    const GlobalIdAnnotation* annotation) {
  if (annotation && annotation->col_row.size() != m.num_blocks()) {
    throw DimensionMismatch("annotation does not cover every block");
  }
  ByteWriter w;
  w.tag("BSMC");
  w.u32(kBsmcFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.num_blocks()));
  w.u32(static_cast<std::uint32_t>(m.num_block_rows()));
  w.u32(static_cast<std::uint32_t>(m.layout().total_dim()));
  w.u32(annotation ? 1u : 0u);
  w.u32s(m.layout().sizes());
  w.u32s(m.row_starts());
  for (const auto& b : m.meta()) {
    w.u32(b.col);
    w.u32(b.row);
    w.u32(b.width);
    w.u32(b.height);
  }
  w.f64s(m.values());
  if (annotation) {
    for (const auto& [c, r] : annotation->col_row) {
      w.u32(c);
      w.u32(r);
    }
  }
  w.u32(crc32(w.buffer()));
  return w.take();
}

DeserializedBsmc deserialize(std::span<const std::uint8_t> bytes, std::size_t base_offset) {
  ByteReader r(bytes, base_offset);
  r.expect_tag("BSMC");
  const auto version = r.u32();
  if (version != kBsmcFormatVersion) r.fail("unsupported version " + std::to_string(version));
  const auto n_blocks = r.u32();
  const auto n_rows = r.u32();
  const auto total_dim = r.u32();
  const auto flags = r.u32();
  if (flags & ~1u) r.fail("unknown flag bits");

  const auto sizes_at = r.offset();
  auto sizes = r.u32s(n_rows);
  auto row_starts = r.u32s(static_cast<std::size_t>(n_rows) + 1);
  const auto meta_at = r.offset();
  if (n_blocks > r.remaining() / 16) r.fail("truncated block metadata");
  std::vector<BlockMeta> meta(n_blocks);
  std::size_t n_values = 0;
  for (auto& b : meta) {
    b.col = r.u32();
    b.row = r.u32();
    b.width = r.u32();
    b.height = r.u32();
    n_values += static_cast<std::size_t>(b.width) * b.height;
  }
  auto values = r.f64s(n_values);
  std::optional<GlobalIdAnnotation> annotation;
  if (flags & 1u) {
    annotation.emplace();
    if (n_blocks > r.remaining() / 8) r.fail("truncated annotation");
    annotation->col_row.resize(n_blocks);
    for (auto& [c, rr] : annotation->col_row) {
      c = r.u32();
      rr = r.u32();
    }
  }
  const auto crc_at = r.position();
  const auto stored_crc = r.u32();
  if (crc32(bytes.first(crc_at)) != stored_crc) {
    throw CorruptStream("CRC mismatch", base_offset + crc_at);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after CRC");

  BlockLayout layout;
  try {
    layout = BlockLayout(std::move(sizes));
  } catch (const std::exception& e) {
    throw CorruptStream(e.what(), sizes_at);
  }
  if (layout.total_dim() != total_dim) throw CorruptStream("total_dim mismatch", sizes_at);
  try {
    return {assemble_bsmc(std::move(layout), std::move(meta), std::move(row_starts),
                          std::move(values)),
            std::move(annotation)};
  } catch (const std::invalid_argument& e) {
    throw CorruptStream(e.what(), meta_at);
  }
}

}  // namespace dba
