#include "dba/backends.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dba/errors.hpp"

namespace dba {

void MessageStats::record(const Frame& frame) {
  auto& e = by_type[static_cast<std::size_t>(frame.type)];
  ++e.count;
  e.bytes += kFrameHeaderSize + frame.payload.size() + kFrameTrailerSize;
}

std::uint64_t MessageStats::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& e : by_type) total += e.bytes;
  return total;
}

RcsContribution aggregate(std::vector<SubRcsEnvelopeMsg> envelopes, const BlockLayout& layout,
                          std::uint32_t n_groups, std::uint32_t iteration,
                          std::span<const BlockCoord> structure) {
  for (const auto& env : envelopes) {
    if (env.iteration != iteration) {
      throw IterationMismatch("envelope of group " + std::to_string(env.group_id) +
                              " is for iteration " + std::to_string(env.iteration) +
                              ", expected " + std::to_string(iteration));
    }
    if (env.group_id >= n_groups) {
      throw ProtocolError("envelope for unknown group " + std::to_string(env.group_id));
    }
  }
  std::sort(envelopes.begin(), envelopes.end(),
            [](const auto& a, const auto& b) { return a.group_id < b.group_id; });
  std::vector<std::uint32_t> missing;
  std::uint32_t expected = 0;
  for (const auto& env : envelopes) {
    if (env.group_id < expected) {
      throw ProtocolError("duplicate envelope for group " + std::to_string(env.group_id));
    }
    for (; expected < env.group_id; ++expected) missing.push_back(expected);
    expected = env.group_id + 1;
  }
  for (; expected < n_groups; ++expected) missing.push_back(expected);
  if (!missing.empty()) throw MissingGroup(std::move(missing));

  RcsContribution total;
  total.r = BsmcMatrix::from_structure(layout, {structure.begin(), structure.end()});
  total.b.assign(layout.total_dim(), 0.0);
  total.jtj_diag.assign(layout.total_dim(), 0.0);
  for (const auto& env : envelopes) {
    const auto& local = env.matrix.layout();
    if (env.local_to_global.size() != local.num_blocks()) {
      throw DimensionMismatch("envelope block map does not match its sub-RCS");
    }
    if (!(env.annotation == annotate(env.matrix, env.local_to_global))) {
      throw ProtocolError("envelope annotation disagrees with its block map");
    }
    merge_add(total.r, env.matrix, &env.annotation);
    for (std::size_t k = 0; k < local.num_blocks(); ++k) {
      const auto g = env.local_to_global[k];
      if (g >= layout.num_blocks()) {
        throw UnknownGlobalId("global block " + std::to_string(g) + " out of range");
      }
      if (layout.size(g) != local.size(k)) {
        throw DimensionMismatch("block size differs between sub-RCS and global layout");
      }
      for (std::uint32_t j = 0; j < local.size(k); ++j) {
        total.b[layout.offset(g) + j] += env.rhs[local.offset(k) + j];
        total.jtj_diag[layout.offset(g) + j] += env.jtj_diag[local.offset(k) + j];
      }
    }
    total.cost += env.cost;
    total.skipped_observations += env.skipped_observations;
    total.excluded_points.insert(total.excluded_points.end(), env.excluded_points.begin(),
                                 env.excluded_points.end());
  }
  return total;
}

TiePointGroupMsg make_tie_point_group(const BaProblem& problem, std::uint32_t group_id,
                                      std::span<const std::uint32_t> point_ids,
                                      double huber_scale) {
  TiePointGroupMsg m;
  m.group_id = group_id;
  m.model = problem.model;
  m.shared_intrinsics = problem.shared_intrinsics();
  m.huber_scale = huber_scale;
  m.total_cameras = static_cast<std::uint32_t>(problem.num_cameras());
  for (auto p : point_ids) {
    for (auto oi : problem.observations_of(p)) {
      m.camera_ids.push_back(problem.observations[oi].camera_id);
    }
  }
  std::sort(m.camera_ids.begin(), m.camera_ids.end());
  m.camera_ids.erase(std::unique(m.camera_ids.begin(), m.camera_ids.end()), m.camera_ids.end());
  if (m.shared_intrinsics) {
    for (auto cam : m.camera_ids) m.camera_intrinsics.push_back(problem.intrinsics_group[cam]);
  }
  m.point_ids.assign(point_ids.begin(), point_ids.end());
  for (std::uint32_t i = 0; i < point_ids.size(); ++i) {
    const auto p = point_ids[i];
    m.points.push_back(problem.points[p]);
    for (auto oi : problem.observations_of(p)) {
      const auto& o = problem.observations[oi];
      const auto cam = std::lower_bound(m.camera_ids.begin(), m.camera_ids.end(), o.camera_id);
      m.observations.push_back(
          {static_cast<std::uint32_t>(cam - m.camera_ids.begin()), i, o.pixel});
    }
  }
  return m;
}

PoseBroadcastMsg make_pose_broadcast(const BaProblem& problem, std::uint32_t iteration,
                                     double lambda, bool commit_trial) {
  PoseBroadcastMsg m;
  m.iteration = iteration;
  m.lambda = lambda;
  m.commit_trial = commit_trial;
  m.model = problem.model;
  const int c = camera_size(problem.model);
  m.poses.reserve(problem.num_cameras() * kPoseSize);
  for (std::size_t i = 0; i < problem.num_cameras(); ++i) {
    const auto params = pack_camera(problem.poses[i], CameraIntrinsics{});
    m.poses.insert(m.poses.end(), params.begin(), params.begin() + kPoseSize);
  }
  for (const auto& in : problem.intrinsics) {
    const auto params = pack_camera(CameraPose{}, in);
    m.intrinsics.insert(m.intrinsics.end(), params.begin() + kPoseSize, params.begin() + c);
  }
  return m;
}

DistributedBackend::DistributedBackend(BaProblem& problem,
                                       std::vector<std::unique_ptr<Channel>> channels,
                                       DistributedOptions options)
    : problem_(problem), layout_((problem.finalize(), problem)),
      blocks_(layout_.block_sizes()), options_(options), channels_(std::move(channels)) {
  if (channels_.empty()) throw std::invalid_argument("distributed runtime needs a worker");
  if (problem_.num_points() == 0) throw AllPointsDegenerate("problem has no points");
  const auto n_groups =
      options_.n_groups == 0 ? static_cast<std::uint32_t>(channels_.size()) : options_.n_groups;
  partition_ = partition_points(problem_, n_groups);
  group_points_ = partition_.groups();
  channel_groups_.resize(channels_.size());
  for (std::uint32_t g = 0; g < partition_.n_groups; ++g) {
    channel_groups_[g % channels_.size()].push_back(g);
  }
  std::vector<std::uint32_t> all(problem_.num_points());
  std::iota(all.begin(), all.end(), 0u);
  structure_ = rcs_structure(problem_, layout_, all);
}

DistributedBackend::~DistributedBackend() { shutdown(); }

void DistributedBackend::shutdown() {
  for (auto& ch : channels_) {
    if (ch) ch->close();
  }
  for (auto& t : local_workers_) {
    if (t.joinable()) t.join();
  }
  local_workers_.clear();
}

void DistributedBackend::send(std::size_t channel, const Frame& frame) {
  stats_.record(frame);
  channels_[channel]->send(frame);
}

Frame DistributedBackend::receive(std::size_t channel, std::vector<std::uint32_t>* waiting_for) {
  Frame f;
  try {
    f = channels_[channel]->receive(options_.receive_timeout);
  } catch (const ReceiveTimeout&) {
    throw MissingGroup(waiting_for ? *waiting_for : std::vector<std::uint32_t>{});
  }
  stats_.record(f);
  if (f.type == MessageType::kError) {
    throw ProtocolError("worker " + std::to_string(channel) +
                        " reported: " + decode_error(f).message);
  }
  return f;
}

void DistributedBackend::start() {
  for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
    for (auto g : channel_groups_[ch]) {
      send(ch, encode(make_tie_point_group(problem_, g, group_points_[g], options_.huber_scale)));
    }
  }
}

RcsContribution DistributedBackend::linearize(std::uint32_t iteration, double lambda) {
  if (stats_[MessageType::kTiePointGroup].count == 0) start();
  const Frame broadcast = encode(make_pose_broadcast(problem_, iteration, lambda, commit_next_));
  for (std::size_t ch = 0; ch < channels_.size(); ++ch) send(ch, broadcast);
  commit_next_ = false;

  std::vector<std::uint32_t> waiting(partition_.n_groups);
  std::iota(waiting.begin(), waiting.end(), 0u);
  std::vector<SubRcsEnvelopeMsg> envelopes;
  for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
    for (std::size_t k = 0; k < channel_groups_[ch].size(); ++k) {
      envelopes.push_back(decode_sub_rcs_envelope(receive(ch, &waiting)));
      std::erase(waiting, envelopes.back().group_id);
    }
  }
  auto total = aggregate(std::move(envelopes), blocks_, partition_.n_groups, iteration,
                         structure_);
  if (total.excluded_points.size() == problem_.num_points()) {
    throw AllPointsDegenerate("every point was excluded from the reduced camera system");
  }
  return total;
}

TrialEvaluation DistributedBackend::evaluate_trial(std::uint32_t iteration,
                                                   std::span<const double> delta_c) {
  if (delta_c.size() != blocks_.total_dim()) {
    throw DimensionMismatch("camera step has wrong dimension");
  }
  saved_poses_ = problem_.poses;
  saved_intrinsics_ = problem_.intrinsics;
  pending_ = true;
  apply_camera_step(problem_, blocks_.offsets(), delta_c);

  const Frame f = encode(DeltaXcMsg{iteration, {delta_c.begin(), delta_c.end()}});
  for (std::size_t ch = 0; ch < channels_.size(); ++ch) send(ch, f);
  std::vector<std::uint32_t> waiting(partition_.n_groups);
  std::iota(waiting.begin(), waiting.end(), 0u);
  std::vector<TrialCostMsg> costs;
  for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
    for (std::size_t k = 0; k < channel_groups_[ch].size(); ++k) {
      costs.push_back(decode_trial_cost(receive(ch, &waiting)));
      if (costs.back().iteration != iteration) {
        throw IterationMismatch("trial cost for iteration " +
                                std::to_string(costs.back().iteration));
      }
      std::erase(waiting, costs.back().group_id);
    }
  }
  if (!waiting.empty()) throw MissingGroup(waiting);
  std::sort(costs.begin(), costs.end(),
            [](const auto& a, const auto& b) { return a.group_id < b.group_id; });
  TrialEvaluation out;
  for (const auto& c : costs) {
    out.cost += c.cost;
    out.point_step_squared_norm += c.point_step_squared_norm;
  }
  return out;
}

void DistributedBackend::resolve_trial(bool accept) {
  if (!pending_) return;
  if (!accept) {
    problem_.poses = std::move(saved_poses_);
    problem_.intrinsics = std::move(saved_intrinsics_);
  }
  saved_poses_.clear();
  saved_intrinsics_.clear();
  pending_ = false;
  commit_next_ = accept;
}

void DistributedBackend::finish(BaProblem& problem) {
  if (finished_) return;
  finished_ = true;
  resolve_trial(false);
  if (stats_[MessageType::kTiePointGroup].count != 0) {
    const Frame stop = encode(StopMsg{commit_next_});
    for (std::size_t ch = 0; ch < channels_.size(); ++ch) send(ch, stop);
    std::vector<std::uint32_t> waiting(partition_.n_groups);
    std::iota(waiting.begin(), waiting.end(), 0u);
    for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
      for (std::size_t k = 0; k < channel_groups_[ch].size(); ++k) {
        const auto msg = decode_group_points(receive(ch, &waiting));
        if (msg.group_id >= partition_.n_groups) throw ProtocolError("unknown group in points");
        const auto& ids = group_points_[msg.group_id];
        if (msg.positions.size() != 3 * ids.size()) {
          throw ProtocolError("group point count mismatch");
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
          problem_.points[ids[i]].position =
              Eigen::Vector3d(msg.positions[3 * i], msg.positions[3 * i + 1],
                              msg.positions[3 * i + 2]);
        }
        std::erase(waiting, msg.group_id);
      }
    }
  }
  shutdown();
  if (&problem != &problem_) {
    problem.poses = problem_.poses;
    problem.intrinsics = problem_.intrinsics;
    problem.points = problem_.points;
  }
}

std::unique_ptr<DistributedBackend> DistributedBackend::in_process(BaProblem& problem,
                                                                   std::uint32_t n_workers,
                                                                   DistributedOptions options,
                                                                   WorkerOptions worker) {
  if (n_workers == 0) throw std::invalid_argument("need at least one worker");
  std::vector<std::unique_ptr<Channel>> main_ends;
  std::vector<std::unique_ptr<Channel>> worker_ends;
  for (std::uint32_t i = 0; i < n_workers; ++i) {
    auto [a, b] = make_memory_channel_pair();
    main_ends.push_back(std::move(a));
    worker_ends.push_back(std::move(b));
  }
  auto backend = std::make_unique<DistributedBackend>(problem, std::move(main_ends), options);
  for (auto& end : worker_ends) {
    backend->local_workers_.emplace_back([ch = std::move(end), worker] {
      try {
        serve_worker(*ch, worker);
      } catch (const std::exception&) {
        // The main node sees the failure as an Error frame or a disconnect.
      }
      ch->close();
    });
  }
  return backend;
}

std::unique_ptr<DistributedBackend> DistributedBackend::loopback_sockets(
    BaProblem& problem, std::uint32_t n_workers, DistributedOptions options,
    WorkerOptions worker) {
  if (n_workers == 0) throw std::invalid_argument("need at least one worker");
  std::vector<std::shared_ptr<TcpListener>> listeners;
  std::vector<std::thread> threads;
  for (std::uint32_t i = 0; i < n_workers; ++i) {
    auto listener = std::make_shared<TcpListener>(Endpoint{"127.0.0.1", 0});
    listeners.push_back(listener);
    threads.emplace_back([listener, worker] {
      try {
        auto ch = listener->accept();
        listener->close();
        serve_worker(*ch, worker);
      } catch (const std::exception&) {
      }
    });
  }
  std::vector<std::unique_ptr<Channel>> channels;
  try {
    for (const auto& l : listeners) {
      channels.push_back(connect_tcp({"127.0.0.1", l->port()}, std::chrono::seconds(10)));
    }
  } catch (...) {
    for (auto& l : listeners) l->close();
    for (auto& t : threads) t.join();
    throw;
  }
  std::unique_ptr<DistributedBackend> backend;
  try {
    backend = std::make_unique<DistributedBackend>(problem, std::move(channels), options);
  } catch (...) {
    for (auto& t : threads) t.join();
    throw;
  }
  backend->local_workers_ = std::move(threads);
  return backend;
}

std::unique_ptr<DistributedBackend> DistributedBackend::connect(
    BaProblem& problem, const std::vector<Endpoint>& endpoints, DistributedOptions options) {
  std::vector<std::unique_ptr<Channel>> channels;
  for (const auto& ep : endpoints) {
    channels.push_back(connect_tcp(ep, std::chrono::seconds(30)));
  }
  return std::make_unique<DistributedBackend>(problem, std::move(channels), options);
}

RuntimeMode parse_runtime_mode(const std::string& text) {
  if (text == "serial") return RuntimeMode::kSerial;
  if (text == "threads") return RuntimeMode::kThreads;
  if (text == "sockets") return RuntimeMode::kSockets;
  throw std::invalid_argument("unknown mode '" + text + "' (serial|threads|sockets)");
}

const char* runtime_mode_name(RuntimeMode mode) {
  switch (mode) {
    case RuntimeMode::kSerial: return "serial";
    case RuntimeMode::kThreads: return "threads";
    case RuntimeMode::kSockets: return "sockets";
  }
  return "unknown";
}

SolveOutcome run_distributed(BaProblem& problem, const LmConfig& config,
                             const RuntimeOptions& runtime) {
  DistributedOptions opts;
  opts.n_groups = runtime.groups;
  opts.huber_scale = runtime.huber_scale;
  opts.receive_timeout = runtime.receive_timeout;
  WorkerOptions worker = runtime.worker;
  worker.n_threads = runtime.threads_per_worker;

  std::unique_ptr<DistributedBackend> backend;
  switch (runtime.mode) {
    case RuntimeMode::kThreads:
      backend = DistributedBackend::in_process(problem, runtime.workers, opts, worker);
      break;
    case RuntimeMode::kSockets:
      backend = runtime.endpoints.empty()
                    ? DistributedBackend::loopback_sockets(problem, runtime.workers, opts, worker)
                    : DistributedBackend::connect(problem, runtime.endpoints, opts);
      break;
    case RuntimeMode::kSerial:
      throw std::invalid_argument("run_distributed needs a threads or sockets runtime");
  }
  SolveOutcome out;
  out.groups = backend->partition().n_groups;
  out.trace = lm_solve(*backend, problem, config);
  out.stats = backend->stats();
  return out;
}

SolveOutcome run_solve(BaProblem& problem, const LmConfig& config,
                       const RuntimeOptions& runtime) {
  if (runtime.mode != RuntimeMode::kSerial) return run_distributed(problem, config, runtime);
  NormalEqOptions opts;
  opts.huber_scale = runtime.huber_scale;
  opts.n_threads = runtime.threads_per_worker;
  SolveOutcome out;
  out.groups = 1;
  out.trace = lm_solve(problem, config, opts);
  return out;
}

}  // namespace dba
