#include "dba/synthetic.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "dba/errors.hpp"

namespace dba {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, purpose, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(purpose)) + index));
}

enum Purpose : std::uint64_t { kFlight = 1, kPoints = 2, kNoise = 3, kInitCamera = 4, kInitPoint = 5 };

Eigen::Vector3d angle_axis_of(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_images == 0 || features_per_image == 0) {
    throw InfeasibleSpec("image and feature counts must be positive");
  }
  if (!(forward_overlap > 0.0 && forward_overlap < 1.0) ||
      !(side_overlap > 0.0 && side_overlap < 1.0)) {
    throw InfeasibleSpec("overlaps must lie in (0, 1)");
  }
  if (!(altitude > 0.0) || !(focal_px > 0.0) || !(image_width_px > 0.0) ||
      !(image_height_px > 0.0)) {
    throw InfeasibleSpec("altitude, focal length and image size must be positive");
  }
  if (!(noise_sigma_px >= 0.0) || !(ground_relief >= 0.0) || !(attitude_jitter >= 0.0) ||
      !(initial_rotation_noise >= 0.0) || !(initial_translation_noise >= 0.0) ||
      !(initial_point_noise >= 0.0)) {
    throw InfeasibleSpec("noise levels must be non-negative");
  }
  if (ground_relief >= 0.5 * altitude) throw InfeasibleSpec("terrain relief reaches the cameras");
  if (grid_rows != 0 && grid_cols != 0 &&
      std::uint64_t{grid_rows} * grid_cols < n_images) {
    throw InfeasibleSpec("grid has fewer slots than images");
  }
}

SyntheticDataset synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const std::uint32_t n = spec.n_images;
  std::uint32_t cols = spec.grid_cols, rows = spec.grid_rows;
  if (cols == 0 && rows == 0) {
    cols = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  }
  if (cols == 0) cols = (n + rows - 1) / rows;
  if (rows == 0) rows = (n + cols - 1) / cols;

  // Ground footprint of one image; flight lines run along x.
  const double foot_x = spec.image_width_px * spec.altitude / spec.focal_px;
  const double foot_y = spec.image_height_px * spec.altitude / spec.focal_px;
  const double dx = foot_x * (1.0 - spec.forward_overlap);
  const double dy = foot_y * (1.0 - spec.side_overlap);

  SyntheticDataset out;
  BaProblem& gt = out.ground_truth;
  gt.model = CameraModel::kBal9;
  gt.poses.resize(n);
  std::vector<Eigen::Vector3d> centers(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    auto rng = stream(spec.seed, kFlight, k);
    std::normal_distribution<double> jitter(0.0, 1.0);
    const std::uint32_t line = k / cols;
    const std::uint32_t j = k % cols;
    const std::uint32_t along = (line % 2 == 0) ? j : cols - 1 - j;
    const double yaw = (line % 2 == 0) ? 0.0 : std::numbers::pi;
    centers[k] = Eigen::Vector3d(along * dx, line * dy,
                                 spec.altitude + 0.01 * spec.altitude * jitter(rng));
    const Eigen::Matrix3d perturb =
        (Eigen::AngleAxisd(spec.attitude_jitter * jitter(rng), Eigen::Vector3d::UnitX()) *
         Eigen::AngleAxisd(spec.attitude_jitter * jitter(rng), Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(spec.attitude_jitter * jitter(rng), Eigen::Vector3d::UnitZ()))
            .toRotationMatrix();
    // World-to-camera rotation: the camera z axis points up, so ground points
    // have negative depth as the BAL model expects.
    const Eigen::Matrix3d r =
        perturb * Eigen::AngleAxisd(-yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    gt.poses[k].rotation = angle_axis_of(r);
    gt.poses[k].translation = -(r * centers[k]);
  }
  CameraIntrinsics intr;
  intr.focal = spec.focal_px;
  if (spec.shared_intrinsics) {
    gt.intrinsics = {intr};
    gt.intrinsics_group.assign(n, 0);
  } else {
    gt.intrinsics.assign(n, intr);
  }

  // Points uniformly over the covered area at a density giving about
  // features_per_image points per footprint.
  double x0 = centers[0].x(), x1 = x0, y0 = centers[0].y(), y1 = y0;
  for (const auto& c : centers) {
    x0 = std::min(x0, c.x());
    x1 = std::max(x1, c.x());
    y0 = std::min(y0, c.y());
    y1 = std::max(y1, c.y());
  }
  x0 -= 0.5 * foot_x;
  x1 += 0.5 * foot_x;
  y0 -= 0.5 * foot_y;
  y1 += 0.5 * foot_y;
  const double density = spec.features_per_image / (foot_x * foot_y);
  const auto n_candidates =
      static_cast<std::size_t>(std::llround(density * (x1 - x0) * (y1 - y0)));
  std::vector<Eigen::Vector3d> candidates(n_candidates);
  {
    auto rng = stream(spec.seed, kPoints, 0);
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), uz(-0.5, 0.5);
    for (auto& p : candidates) {
      const double x = ux(rng), y = uy(rng);
      const double z = spec.ground_relief * std::sin(x / 37.0) * std::cos(y / 53.0) +
                       0.1 * spec.ground_relief * uz(rng);
      p = Eigen::Vector3d(x, y, z);
    }
  }

  // Visibility: inside the image and in front of the camera.
  const double half_w = 0.5 * spec.image_width_px, half_h = 0.5 * spec.image_height_px;
  const double reach = 0.75 * std::hypot(foot_x, foot_y) + 2.0 * spec.ground_relief;
  struct RawObs {
    std::uint32_t camera;
    std::uint32_t candidate;
    Eigen::Vector2d pixel;
  };
  std::vector<RawObs> raw;
  std::vector<std::uint32_t> views(n_candidates, 0);
  for (std::uint32_t k = 0; k < n; ++k) {
    for (std::uint32_t i = 0; i < n_candidates; ++i) {
      const auto& p = candidates[i];
      if (std::abs(p.x() - centers[k].x()) > reach || std::abs(p.y() - centers[k].y()) > reach) {
        continue;
      }
      const Eigen::Vector2d px = project(gt.poses[k], gt.intrinsics_of(k), Point3D{p});
      if (std::abs(px.x()) <= half_w && std::abs(px.y()) <= half_h) {
        raw.push_back({k, i, px});
        ++views[i];
      }
    }
  }

  std::vector<std::uint32_t> index(n_candidates, 0);
  std::uint32_t n_points = 0;
  for (std::size_t i = 0; i < n_candidates; ++i) {
    if (views[i] >= 2) {
      index[i] = n_points++;
      gt.points.push_back(Point3D{candidates[i]});
    }
  }
  if (n_points == 0) throw InfeasibleSpec("flight produces no point seen by two cameras");

  std::vector<std::uint32_t> per_camera(n, 0);
  for (std::size_t s = 0; s < raw.size();) {
    // Noise is drawn per camera from its own stream.
    const auto k = raw[s].camera;
    auto rng = stream(spec.seed, kNoise, k);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (; s < raw.size() && raw[s].camera == k; ++s) {
      if (views[raw[s].candidate] < 2) continue;
      Observation o;
      o.camera_id = k;
      o.point_id = index[raw[s].candidate];
      o.pixel = raw[s].pixel;
      if (spec.noise_sigma_px > 0.0) {
        const double ex = noise(rng), ey = noise(rng);
        o.pixel += spec.noise_sigma_px * Eigen::Vector2d(ex, ey);
      }
      gt.observations.push_back(o);
      ++per_camera[k];
    }
  }
  for (std::uint32_t k = 0; k < n; ++k) {
    if (per_camera[k] == 0) {
      throw InfeasibleSpec("camera " + std::to_string(k) + " shares no point with another");
    }
  }
  gt.finalize();

  BaProblem& init = out.problem;
  init = gt;
  for (std::uint32_t k = 0; k < n; ++k) {
    auto rng = stream(spec.seed, kInitCamera, k);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int a = 0; a < 3; ++a) init.poses[k].rotation[a] += spec.initial_rotation_noise * g(rng);
    for (int a = 0; a < 3; ++a) {
      init.poses[k].translation[a] += spec.initial_translation_noise * g(rng);
    }
  }
  {
    auto rng = stream(spec.seed, kInitPoint, 0);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& p : init.points) {
      for (int a = 0; a < 3; ++a) p.position[a] += spec.initial_point_noise * g(rng);
    }
  }
  init.finalize();
  return out;
}

namespace {

using json = nlohmann::json;

template <class F>
void for_each_field(SyntheticSpec& s, F&& f) {
  f("n_images", s.n_images);
  f("features_per_image", s.features_per_image);
  f("noise_sigma_px", s.noise_sigma_px);
  f("grid_rows", s.grid_rows);
  f("grid_cols", s.grid_cols);
  f("altitude", s.altitude);
  f("forward_overlap", s.forward_overlap);
  f("side_overlap", s.side_overlap);
  f("focal_px", s.focal_px);
  f("image_width_px", s.image_width_px);
  f("image_height_px", s.image_height_px);
  f("ground_relief", s.ground_relief);
  f("attitude_jitter", s.attitude_jitter);
  f("initial_rotation_noise", s.initial_rotation_noise);
  f("initial_translation_noise", s.initial_translation_noise);
  f("initial_point_noise", s.initial_point_noise);
  f("shared_intrinsics", s.shared_intrinsics);
  f("seed", s.seed);
}

}  // namespace

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("synthetic spec: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("synthetic spec must be a JSON object");
  SyntheticSpec s;
  std::size_t known = 0;
  for_each_field(s, [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    ++known;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("synthetic spec field '") + key + "': " + e.what());
    }
  });
  if (known != j.size()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool found = false;
      for_each_field(s, [&](const char* key, auto&) { found = found || it.key() == key; });
      if (!found) throw std::invalid_argument("synthetic spec: unknown field '" + it.key() + "'");
    }
  }
  s.validate();
  return s;
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
  SyntheticSpec s = spec;
  json j = json::object();
  for_each_field(s, [&](const char* key, auto& field) { j[key] = field; });
  return j.dump(2);
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return synthetic_spec_from_json(ss.str());
}

}  // namespace dba
