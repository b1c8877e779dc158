#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dba {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateProjection : public Error {
 public:
  explicit DegenerateProjection(double depth)
      : Error("degenerate projection: transformed depth " +
              std::to_string(depth)),
        depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class UnknownGlobalId : public Error {
 public:
  using Error::Error;
};

class InvalidSparsity : public Error {
 public:
  using Error::Error;
};

/// Raised when a size or index would not fit the 4-byte integer fields of the
/// compressed formats.
class IndexOverflow : public Error {
 public:
  using Error::Error;
};

class CorruptStream : public Error {
 public:
  CorruptStream(const std::string& what, std::size_t offset)
      : Error("corrupt stream at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class EmptyPoint : public Error {
 public:
  explicit EmptyPoint(std::uint32_t point_id)
      : Error("point " + std::to_string(point_id) +
              " has no usable observations"),
        point_id_(point_id) {}
  std::uint32_t point_id() const { return point_id_; }

 private:
  std::uint32_t point_id_;
};

class SingularPointBlock : public Error {
 public:
  SingularPointBlock(std::uint32_t point_id, double condition)
      : Error("point " + std::to_string(point_id) +
              " has a singular 3x3 block (condition " +
              std::to_string(condition) + ")"),
        point_id_(point_id) {}
  std::uint32_t point_id() const { return point_id_; }

 private:
  std::uint32_t point_id_;
};

class SingularDiagonalBlock : public Error {
 public:
  explicit SingularDiagonalBlock(std::uint32_t block_id)
      : Error("diagonal block " + std::to_string(block_id) +
              " of the reduced camera system is singular"),
        block_id_(block_id) {}
  std::uint32_t block_id() const { return block_id_; }

 private:
  std::uint32_t block_id_;
};

class AllPointsDegenerate : public Error {
 public:
  using Error::Error;
};

class MissingGroup : public Error {
 public:
  explicit MissingGroup(std::vector<std::uint32_t> missing)
      : Error(describe(missing)), missing_(std::move(missing)) {}
  const std::vector<std::uint32_t>& missing() const { return missing_; }

 private:
  static std::string describe(const std::vector<std::uint32_t>& ids) {
    std::string s = "missing sub-RCS envelopes for groups:";
    for (auto id : ids) s += " " + std::to_string(id);
    return s;
  }
  std::vector<std::uint32_t> missing_;
};

class IterationMismatch : public Error {
 public:
  using Error::Error;
};

class WorkerDisconnected : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

}  // namespace dba
