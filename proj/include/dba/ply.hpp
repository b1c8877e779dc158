#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dba/problem.hpp"

namespace dba {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Colour of each point: linear blue -> red over the 1st..99th percentile of
/// the z coordinate.
std::vector<std::array<std::uint8_t, 3>> height_colors(const BaProblem& problem);

/// Writes the points as PLY vertices (float x y z, uchar red green blue).
void export_ply(const BaProblem& problem, const std::string& path,
                PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace dba
