#pragma once

// Synthetic UAV-style datasets: a serpentine grid flight of nadir cameras over
// a gently perturbed ground plane, with Gaussian pixel noise.

#include <cstdint>
#include <string>

#include "dba/problem.hpp"

namespace dba {

struct SyntheticSpec {
  std::uint32_t n_images = 100;
  std::uint32_t features_per_image = 300;
  double noise_sigma_px = 1.0;
  /// Flight lines x images per line; 0 picks a near-square grid.
  std::uint32_t grid_rows = 0;
  std::uint32_t grid_cols = 0;
  double altitude = 100.0;
  double forward_overlap = 0.8;
  double side_overlap = 0.6;
  double focal_px = 1000.0;
  double image_width_px = 1000.0;
  double image_height_px = 750.0;
  double ground_relief = 12.0;  // amplitude of the terrain undulation
  double attitude_jitter = 0.02;       // rad, ground-truth roll/pitch/yaw noise
  double initial_rotation_noise = 2e-3;     // rad
  double initial_translation_noise = 0.2;   // world units
  double initial_point_noise = 0.3;         // world units
  bool shared_intrinsics = false;
  std::uint64_t seed = 1;

  /// Throws InfeasibleSpec.
  void validate() const;
};

struct SyntheticDataset {
  BaProblem problem;       // perturbed starting point with noisy observations
  BaProblem ground_truth;  // same observations, true parameters
};

/// Deterministic for a fixed spec. Throws InfeasibleSpec when the flight
/// produces no point seen by two cameras.
SyntheticDataset synthesize(const SyntheticSpec& spec);

/// JSON object whose keys are the field names above; missing keys keep their
/// defaults, unknown keys are an error.
SyntheticSpec synthetic_spec_from_json(const std::string& text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec load_synthetic_spec(const std::string& path);

}  // namespace dba
