#pragma once

// BAL ("bundle adjustment in the large") text format:
//   n_cameras n_points n_observations
//   cam_id pt_id x y                     (n_observations lines)
//   9 camera parameters per camera       (w, t, f, k1, k2)
//   3 coordinates per point
// Tokens may be separated by any whitespace.

#include <cstddef>
#include <iosfwd>
#include <string>

#include "dba/problem.hpp"

namespace dba {

struct LoadReport {
  std::size_t pruned_cameras = 0;  // cameras without observations
  std::size_t pruned_points = 0;   // points without observations
};

/// Throws ParseError (with line number), IndexOutOfRange, or
/// std::runtime_error when the file cannot be opened.
BaProblem load_bal(const std::string& path, LoadReport* report = nullptr);
BaProblem parse_bal(std::string_view text, LoadReport* report = nullptr);

/// Writes every number in its shortest round-trip form, so load_bal(save_bal)
/// reproduces the problem bit for bit. Requires per-image BAL9 cameras.
void save_bal(const BaProblem& problem, const std::string& path);
std::string format_bal(const BaProblem& problem);

}  // namespace dba
