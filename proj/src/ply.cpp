#include "dba/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dba {
namespace {

double percentile(const std::vector<double>& sorted_values, double q) {
  if (sorted_values.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted_values[lo] + t * (sorted_values[hi] - sorted_values[lo]);
}

void put_f32(std::ofstream& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
           (bits >> 24);
  }
  char b[4];
  std::memcpy(b, &bits, 4);
  out.write(b, 4);
}

}  // namespace

std::vector<std::array<std::uint8_t, 3>> height_colors(const BaProblem& problem) {
  std::vector<double> z;
  z.reserve(problem.num_points());
  for (const auto& p : problem.points) z.push_back(p.position.z());
  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end());
  const double lo = percentile(sorted, 0.01);
  const double hi = percentile(sorted, 0.99);
  std::vector<std::array<std::uint8_t, 3>> colors(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = hi > lo ? std::clamp((z[i] - lo) / (hi - lo), 0.0, 1.0) : 0.5;
    colors[i] = {static_cast<std::uint8_t>(std::lround(255.0 * t)), 0,
                 static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)))};
  }
  return colors;
}

void export_ply(const BaProblem& problem, const std::string& path, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto colors = height_colors(problem);
  out << "ply\n"
      << (format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << problem.num_points() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  for (std::size_t i = 0; i < problem.num_points(); ++i) {
    const auto& p = problem.points[i].position;
    if (format == PlyFormat::kAscii) {
      out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' '
          << static_cast<float>(p.z()) << ' ' << int{colors[i][0]} << ' ' << int{colors[i][1]}
          << ' ' << int{colors[i][2]} << '\n';
    } else {
      for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>(p[k]));
      out.write(reinterpret_cast<const char*>(colors[i].data()), 3);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace dba
