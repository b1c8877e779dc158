#include "dba/bal_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "dba/errors.hpp"

namespace dba {
namespace {

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}

  std::size_t line() const { return line_; }

  bool next(std::string_view& token) {
    while (pos_ < text_.size() && is_space(text_[pos_])) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    const auto start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    token = text_.substr(start, pos_ - start);
    return true;
  }

  std::string_view expect(const char* what) {
    std::string_view t;
    if (!next(t)) throw ParseError(std::string("unexpected end of file, expected ") + what, line_);
    return t;
  }

  template <class T>
  T number(const char* what) {
    const auto t = expect(what);
    T value{};
    const auto* end = t.data() + t.size();
    const auto res = std::from_chars(t.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ParseError("malformed " + std::string(what) + " '" + std::string(t) + "'", line_);
    }
    return value;
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void prune(BaProblem& p, LoadReport* report) {
  std::vector<std::uint32_t> cam_count(p.num_cameras(), 0), pt_count(p.num_points(), 0);
  for (const auto& o : p.observations) {
    ++cam_count[o.camera_id];
    ++pt_count[o.point_id];
  }
  std::vector<std::uint32_t> cam_map(p.num_cameras()), pt_map(p.num_points());
  std::size_t n_cam = 0, n_pt = 0;
  for (std::size_t i = 0; i < cam_map.size(); ++i) {
    if (cam_count[i] > 0) {
      p.poses[n_cam] = p.poses[i];
      p.intrinsics[n_cam] = p.intrinsics[i];
      cam_map[i] = static_cast<std::uint32_t>(n_cam++);
    }
  }
  for (std::size_t i = 0; i < pt_map.size(); ++i) {
    if (pt_count[i] > 0) {
      p.points[n_pt] = p.points[i];
      pt_map[i] = static_cast<std::uint32_t>(n_pt++);
    }
  }
  if (report) {
    report->pruned_cameras = p.num_cameras() - n_cam;
    report->pruned_points = p.num_points() - n_pt;
  }
  if (n_cam == p.num_cameras() && n_pt == p.num_points()) return;
  p.poses.resize(n_cam);
  p.intrinsics.resize(n_cam);
  p.points.resize(n_pt);
  for (auto& o : p.observations) {
    o.camera_id = cam_map[o.camera_id];
    o.point_id = pt_map[o.point_id];
  }
}

}  // namespace

BaProblem parse_bal(std::string_view text, LoadReport* report) {
  Tokenizer tok(text);
  const auto n_cams = tok.number<std::uint32_t>("camera count");
  const auto n_pts = tok.number<std::uint32_t>("point count");
  const auto n_obs = tok.number<std::uint64_t>("observation count");
  if (n_obs > text.size() / 8) {
    throw ParseError("observation count " + std::to_string(n_obs) +
                         " does not fit the file size",
                     1);
  }
  BaProblem p;
  p.model = CameraModel::kBal9;
  p.observations.reserve(n_obs);
  for (std::uint64_t i = 0; i < n_obs; ++i) {
    std::string_view t;
    if (!tok.next(t)) {
      throw ParseError("header declares " + std::to_string(n_obs) +
                           " observations but the file ends after " + std::to_string(i),
                       tok.line());
    }
    Observation o;
    std::uint32_t cam = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), cam);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      throw ParseError("malformed camera index '" + std::string(t) + "'", tok.line());
    }
    o.camera_id = cam;
    o.point_id = tok.number<std::uint32_t>("point index");
    o.pixel.x() = tok.number<double>("observation x");
    o.pixel.y() = tok.number<double>("observation y");
    if (o.camera_id >= n_cams || o.point_id >= n_pts) {
      throw IndexOutOfRange("line " + std::to_string(tok.line()) + ": observation " +
                            std::to_string(i) + " references camera " +
                            std::to_string(o.camera_id) + ", point " +
                            std::to_string(o.point_id));
    }
    p.observations.push_back(o);
  }
  p.poses.resize(n_cams);
  p.intrinsics.resize(n_cams);
  for (std::uint32_t c = 0; c < n_cams; ++c) {
    CameraParams params{};
    for (int k = 0; k < 9; ++k) params[k] = tok.number<double>("camera parameter");
    unpack_camera(params, p.poses[c], p.intrinsics[c]);
  }
  p.points.resize(n_pts);
  for (auto& pt : p.points) {
    for (int k = 0; k < 3; ++k) pt.position[k] = tok.number<double>("point coordinate");
  }
  std::string_view extra;
  if (tok.next(extra)) {
    throw ParseError("unexpected data after the last point: '" + std::string(extra) + "'",
                     tok.line());
  }
  prune(p, report);
  p.finalize();
  return p;
}

BaProblem load_bal(const std::string& path, LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_bal(ss.str(), report);
}

std::string format_bal(const BaProblem& problem) {
  if (problem.model != CameraModel::kBal9 || problem.shared_intrinsics()) {
    throw std::invalid_argument("BAL output needs per-image 9-parameter cameras");
  }
  std::string out;
  out.reserve(64 * problem.observations.size() + 256 * problem.num_cameras() +
              80 * problem.num_points());
  out += std::to_string(problem.num_cameras()) + ' ' + std::to_string(problem.num_points()) +
         ' ' + std::to_string(problem.observations.size()) + '\n';
  for (const auto& o : problem.observations) {
    out += std::to_string(o.camera_id);
    out += ' ';
    out += std::to_string(o.point_id);
    out += ' ';
    append_number(out, o.pixel.x());
    out += ' ';
    append_number(out, o.pixel.y());
    out += '\n';
  }
  for (std::size_t c = 0; c < problem.num_cameras(); ++c) {
    const auto params = pack_camera(problem.poses[c], problem.intrinsics[c]);
    for (int k = 0; k < 9; ++k) {
      append_number(out, params[k]);
      out += '\n';
    }
  }
  for (const auto& pt : problem.points) {
    for (int k = 0; k < 3; ++k) {
      append_number(out, pt.position[k]);
      out += '\n';
    }
  }
  return out;
}

void save_bal(const BaProblem& problem, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto text = format_bal(problem);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace dba
