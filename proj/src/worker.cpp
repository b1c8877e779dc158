#include "dba/worker.hpp"

#include <algorithm>
#include <numeric>

#include "dba/errors.hpp"
#include "dba/lm.hpp"

namespace dba {

GroupState::GroupState(const TiePointGroupMsg& msg)
    : group_id_(msg.group_id), total_cameras_(msg.total_cameras),
      huber_scale_(msg.huber_scale), camera_ids_(msg.camera_ids), point_ids_(msg.point_ids) {
  if (!std::is_sorted(camera_ids_.begin(), camera_ids_.end()) ||
      std::adjacent_find(camera_ids_.begin(), camera_ids_.end()) != camera_ids_.end()) {
    throw ProtocolError("tie-point group cameras must be ascending and unique");
  }
  for (auto id : camera_ids_) {
    if (id >= total_cameras_) throw ProtocolError("tie-point group camera id out of range");
  }
  const auto m = camera_ids_.size();
  problem_.model = msg.model;
  problem_.poses.resize(m);
  if (msg.shared_intrinsics) {
    intrinsics_ids_ = msg.camera_intrinsics;
    std::sort(intrinsics_ids_.begin(), intrinsics_ids_.end());
    intrinsics_ids_.erase(std::unique(intrinsics_ids_.begin(), intrinsics_ids_.end()),
                          intrinsics_ids_.end());
    problem_.intrinsics.resize(intrinsics_ids_.size());
    problem_.intrinsics_group.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto it = std::lower_bound(intrinsics_ids_.begin(), intrinsics_ids_.end(),
                                       msg.camera_intrinsics[i]);
      problem_.intrinsics_group[i] = static_cast<std::uint32_t>(it - intrinsics_ids_.begin());
    }
  } else {
    intrinsics_ids_ = camera_ids_;
    problem_.intrinsics.resize(m);
  }
  problem_.points = msg.points;
  problem_.observations.reserve(msg.observations.size());
  for (const auto& o : msg.observations) {
    problem_.observations.push_back({o.local_camera, o.local_point, o.pixel});
  }
  problem_.finalize();
  layout_ = std::make_unique<ParameterLayout>(problem_);
  blocks_ = BlockLayout(layout_->block_sizes());

  local_to_global_ = camera_ids_;
  if (msg.shared_intrinsics) {
    for (auto g : intrinsics_ids_) local_to_global_.push_back(total_cameras_ + g);
  }
}

void GroupState::set_cameras(const PoseBroadcastMsg& poses) {
  if (poses.model != problem_.model) throw ProtocolError("camera model differs from group");
  const auto c = camera_size(problem_.model);
  const auto width = static_cast<std::size_t>(c - kPoseSize);
  if (poses.poses.size() != std::size_t{total_cameras_} * kPoseSize) {
    throw ProtocolError("pose broadcast does not cover every camera");
  }
  const std::size_t n_intrinsics = poses.intrinsics.size() / width;
  CameraParams params{};
  for (std::size_t i = 0; i < camera_ids_.size(); ++i) {
    const auto g = camera_ids_[i];
    std::copy_n(poses.poses.begin() + std::size_t{g} * kPoseSize, kPoseSize, params.begin());
    CameraIntrinsics unused;
    unpack_camera(params, problem_.poses[i], unused);
  }
  for (std::size_t j = 0; j < intrinsics_ids_.size(); ++j) {
    const auto g = intrinsics_ids_[j];
    if (g >= n_intrinsics) throw ProtocolError("pose broadcast lacks intrinsics entry");
    std::copy_n(poses.intrinsics.begin() + g * width, width, params.begin() + kPoseSize);
    CameraPose unused;
    unpack_camera(params, unused, problem_.intrinsics[j]);
  }
}

SubRcsEnvelopeMsg GroupState::form(std::uint32_t iteration, double lambda,
                                   const NormalEqOptions& options) {
  NormalEqOptions opts = options;
  opts.huber_scale = huber_scale_;
  std::vector<std::uint32_t> points(problem_.num_points());
  std::iota(points.begin(), points.end(), 0u);
  auto contribution = form_rcs_contribution(problem_, *layout_, points, lambda, opts, true);
  point_systems_ = std::move(contribution.point_systems);

  SubRcsEnvelopeMsg env;
  env.group_id = group_id_;
  env.iteration = iteration;
  env.skipped_observations = contribution.skipped_observations;
  env.cost = contribution.cost;
  for (auto p : contribution.excluded_points) env.excluded_points.push_back(point_ids_[p]);
  env.local_to_global = local_to_global_;
  env.rhs = std::move(contribution.b);
  env.jtj_diag = std::move(contribution.jtj_diag);
  env.matrix = std::move(contribution.r);
  env.annotation = annotate(env.matrix, local_to_global_);
  return env;
}

TrialCostMsg GroupState::trial(const DeltaXcMsg& delta) {
  const bool shared = problem_.shared_intrinsics();
  const auto c = static_cast<std::size_t>(camera_size(problem_.model));
  auto global_offset = [&](std::size_t g) -> std::size_t {
    if (!shared) return g * c;
    if (g < total_cameras_) return g * kPoseSize;
    return std::size_t{total_cameras_} * kPoseSize + (g - total_cameras_) * (c - kPoseSize);
  };
  std::vector<double> local(blocks_.total_dim());
  for (std::size_t k = 0; k < local_to_global_.size(); ++k) {
    const auto from = global_offset(local_to_global_[k]);
    const auto size = blocks_.size(k);
    if (from + size > delta.delta.size()) throw ProtocolError("camera step too short");
    std::copy_n(delta.delta.begin() + from, size, local.begin() + blocks_.offset(k));
  }

  saved_points_ = problem_.points;
  pending_ = true;
  apply_camera_step(problem_, blocks_.offsets(), local);
  const auto dp = back_substitute_points(point_systems_, blocks_, local);
  TrialCostMsg out;
  out.group_id = group_id_;
  out.iteration = delta.iteration;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    problem_.points[point_systems_[i].point_id].position += dp[i];
    out.point_step_squared_norm += dp[i].squaredNorm();
  }
  out.cost = total_cost(problem_, huber_scale_);
  return out;
}

void GroupState::resolve(bool commit) {
  if (pending_ && !commit) problem_.points = saved_points_;
  saved_points_.clear();
  pending_ = false;
}

GroupPointsMsg GroupState::points() const {
  GroupPointsMsg out;
  out.group_id = group_id_;
  out.positions.reserve(3 * problem_.num_points());
  for (const auto& p : problem_.points) {
    for (int k = 0; k < 3; ++k) out.positions.push_back(p.position[k]);
  }
  return out;
}

SubRcsEnvelopeMsg worker_form_subrcs(const TiePointGroupMsg& group,
                                     const PoseBroadcastMsg& poses,
                                     const NormalEqOptions& options) {
  GroupState state(group);
  state.set_cameras(poses);
  return state.form(poses.iteration, poses.lambda, options);
}

WorkerSession::WorkerSession(WorkerOptions options) : options_(options) {}

std::vector<Frame> WorkerSession::handle(const Frame& in) {
  std::vector<Frame> replies;
  switch (in.type) {
    case MessageType::kTiePointGroup: {
      const auto msg = decode_tie_point_group(in);
      if (!groups_.try_emplace(msg.group_id, msg).second) {
        throw ProtocolError("group " + std::to_string(msg.group_id) + " sent twice");
      }
      break;
    }
    case MessageType::kPoseBroadcast: {
      const auto msg = decode_pose_broadcast(in);
      NormalEqOptions opts;
      opts.n_threads = options_.n_threads;
      for (auto& [id, group] : groups_) {
        group.resolve(msg.commit_trial);
        group.set_cameras(msg);
        replies.push_back(encode(group.form(msg.iteration, msg.lambda, opts)));
      }
      break;
    }
    case MessageType::kDeltaXc: {
      const auto msg = decode_delta_xc(in);
      for (auto& [id, group] : groups_) replies.push_back(encode(group.trial(msg)));
      break;
    }
    case MessageType::kStop: {
      const auto msg = decode_stop(in);
      for (auto& [id, group] : groups_) {
        group.resolve(msg.commit_trial);
        replies.push_back(encode(group.points()));
      }
      finished_ = true;
      break;
    }
    case MessageType::kError:
      finished_ = true;
      break;
    default:
      throw ProtocolError(std::string("worker cannot handle ") + message_type_name(in.type));
  }
  return replies;
}

bool serve_worker(Channel& channel, const WorkerOptions& options) {
  WorkerSession session(options);
  std::uint32_t received = 0;
  while (!session.finished()) {
    Frame in = channel.receive();
    ++received;
    if (options.fail_after_frames != 0 && received >= options.fail_after_frames) {
      channel.close();
      return false;
    }
    std::vector<Frame> replies;
    try {
      replies = session.handle(in);
    } catch (const std::exception& e) {
      try {
        channel.send(encode(ErrorMsg{e.what()}));
      } catch (const std::exception&) {
      }
      throw;
    }
    for (const auto& f : replies) channel.send(f);
  }
  return true;
}

}  // namespace dba
