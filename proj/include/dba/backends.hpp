#pragma once

// Main-node side of the distributed runtime and the runtime selection used by
// the CLI. Per run: each tie-point group is sent once; per LM iteration each
// worker receives one PoseBroadcast and returns one SubRcsEnvelope per group
// it owns, then receives DeltaXc and returns one TrialCost per group.

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dba/lm.hpp"
#include "dba/partition.hpp"
#include "dba/transport.hpp"
#include "dba/wire.hpp"
#include "dba/worker.hpp"

namespace dba {

/// Bytes and counts per message class, as seen by the main node (encoded
/// frame sizes, both directions).
struct MessageStats {
  struct Entry {
    std::uint64_t count = 0;
    std::uint64_t bytes = 0;
  };
  std::array<Entry, kMaxMessageType + 1> by_type{};

  void record(const Frame& frame);
  const Entry& operator[](MessageType t) const {
    return by_type[static_cast<std::size_t>(t)];
  }
  std::uint64_t total_bytes() const;
};

/// Merges envelopes in ascending group id into the global RCS contribution.
/// Requires exactly one envelope per group 0..n_groups-1, all for
/// `iteration`. `structure` (optional) pre-sizes the global matrix.
/// Throws MissingGroup, IterationMismatch, ProtocolError (duplicate group).
RcsContribution aggregate(std::vector<SubRcsEnvelopeMsg> envelopes, const BlockLayout& layout,
                          std::uint32_t n_groups, std::uint32_t iteration,
                          std::span<const BlockCoord> structure = {});

/// Builds the tie-point group message for the given points.
TiePointGroupMsg make_tie_point_group(const BaProblem& problem, std::uint32_t group_id,
                                      std::span<const std::uint32_t> point_ids,
                                      double huber_scale = 0.0);
PoseBroadcastMsg make_pose_broadcast(const BaProblem& problem, std::uint32_t iteration,
                                     double lambda, bool commit_trial);

struct DistributedOptions {
  /// Point groups; 0 selects one group per channel. Groups are assigned to
  /// channels round-robin.
  std::uint32_t n_groups = 0;
  double huber_scale = 0.0;
  std::chrono::milliseconds receive_timeout{std::chrono::minutes(10)};
};

class DistributedBackend final : public LmBackend {
 public:
  DistributedBackend(BaProblem& problem, std::vector<std::unique_ptr<Channel>> channels,
                     DistributedOptions options);
  ~DistributedBackend() override;

  /// Workers as threads connected through memory channels.
  static std::unique_ptr<DistributedBackend> in_process(BaProblem& problem,
                                                        std::uint32_t n_workers,
                                                        DistributedOptions options,
                                                        WorkerOptions worker = {});
  /// Workers as threads serving real TCP connections on 127.0.0.1.
  static std::unique_ptr<DistributedBackend> loopback_sockets(BaProblem& problem,
                                                              std::uint32_t n_workers,
                                                              DistributedOptions options,
                                                              WorkerOptions worker = {});
  /// External workers (`dba worker --listen host:port`).
  static std::unique_ptr<DistributedBackend> connect(BaProblem& problem,
                                                     const std::vector<Endpoint>& endpoints,
                                                     DistributedOptions options);

  const ParameterLayout& layout() const override { return layout_; }
  std::size_t num_observations() const override { return problem_.observations.size(); }
  RcsContribution linearize(std::uint32_t iteration, double lambda) override;
  TrialEvaluation evaluate_trial(std::uint32_t iteration,
                                 std::span<const double> delta_c) override;
  void resolve_trial(bool accept) override;
  void finish(BaProblem& problem) override;

  const MessageStats& stats() const { return stats_; }
  const PointPartition& partition() const { return partition_; }
  std::size_t num_channels() const { return channels_.size(); }

 private:
  void start();
  void send(std::size_t channel, const Frame& frame);
  Frame receive(std::size_t channel, std::vector<std::uint32_t>* waiting_for);
  void shutdown();

  BaProblem& problem_;
  ParameterLayout layout_;
  BlockLayout blocks_;
  DistributedOptions options_;
  std::vector<std::unique_ptr<Channel>> channels_;
  std::vector<std::thread> local_workers_;
  PointPartition partition_;
  std::vector<std::vector<std::uint32_t>> group_points_;
  std::vector<std::vector<std::uint32_t>> channel_groups_;
  std::vector<BlockCoord> structure_;
  MessageStats stats_;
  std::vector<CameraPose> saved_poses_;
  std::vector<CameraIntrinsics> saved_intrinsics_;
  bool pending_ = false;
  bool commit_next_ = false;
  bool finished_ = false;
};

enum class RuntimeMode { kSerial, kThreads, kSockets };
RuntimeMode parse_runtime_mode(const std::string& text);
const char* runtime_mode_name(RuntimeMode mode);

struct RuntimeOptions {
  RuntimeMode mode = RuntimeMode::kSerial;
  std::uint32_t workers = 1;
  std::uint32_t groups = 0;  // 0: one per worker
  std::size_t threads_per_worker = 1;
  double huber_scale = 0.0;
  /// Sockets mode: external workers; empty spawns loopback workers.
  std::vector<Endpoint> endpoints;
  std::chrono::milliseconds receive_timeout{std::chrono::minutes(10)};
  WorkerOptions worker;  // in-process and loopback workers only
};

struct SolveOutcome {
  LmTrace trace;
  MessageStats stats;
  std::uint32_t groups = 0;
};

/// Runs lm_solve on the selected runtime.
SolveOutcome run_solve(BaProblem& problem, const LmConfig& config,
                       const RuntimeOptions& runtime);

/// run_solve with a distributed runtime (threads or sockets).
SolveOutcome run_distributed(BaProblem& problem, const LmConfig& config,
                             const RuntimeOptions& runtime);

}  // namespace dba
