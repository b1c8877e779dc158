#include "dba/byte_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>

#include "dba/errors.hpp"

namespace dba {
namespace {

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = reinterpret_cast<std::uint8_t*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
  }
  return v;
}

template <typename T>
void put(std::vector<std::uint8_t>& buf, T v) {
  v = to_le(v);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  // zlib takes a uInt length.
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::tag(std::string_view magic) {
  buf_.insert(buf_.end(), magic.begin(), magic.end());
}

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::f64s(std::span<const double> v) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size_bytes());
  } else {
    for (double d : v) f64(d);
  }
}

void ByteWriter::u32s(std::span<const std::uint32_t> v) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size_bytes());
  } else {
    for (auto d : v) u32(d);
  }
}

void ByteReader::fail(const std::string& what) const {
  throw CorruptStream(what, offset());
}

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    fail("truncated: need " + std::to_string(n) + " bytes, have " +
         std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return to_le(v);
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, data_.data() + pos_, 8);
  pos_ += 8;
  return to_le(v);
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::expect_tag(std::string_view magic) {
  need(magic.size());
  if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0) {
    fail("bad magic, expected \"" + std::string(magic) + "\"");
  }
  pos_ += magic.size();
}

std::string ByteReader::string() {
  const auto n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<double> ByteReader::f64s(std::size_t n) {
  if (n > remaining() / 8) need(n * 8);
  std::vector<double> out(n);
  for (auto& d : out) d = f64();
  return out;
}

std::vector<std::uint32_t> ByteReader::u32s(std::size_t n) {
  if (n > remaining() / 4) need(n * 4);
  std::vector<std::uint32_t> out(n);
  for (auto& d : out) d = u32();
  return out;
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

}  // namespace dba
