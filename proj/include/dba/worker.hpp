#pragma once

// Worker side of the distributed runtime. A worker owns one or more tie-point
// groups; for each it keeps a local problem whose cameras are the involved
// cameras renumbered 0..m-1 in ascending global order.

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "dba/normal_equations.hpp"
#include "dba/problem.hpp"
#include "dba/transport.hpp"
#include "dba/wire.hpp"

namespace dba {

class GroupState {
 public:
  explicit GroupState(const TiePointGroupMsg& msg);

  std::uint32_t group_id() const { return group_id_; }
  const BaProblem& problem() const { return problem_; }
  const std::vector<std::uint32_t>& local_to_global() const { return local_to_global_; }

  /// Copies the involved cameras out of a broadcast.
  void set_cameras(const PoseBroadcastMsg& poses);
  SubRcsEnvelopeMsg form(std::uint32_t iteration, double lambda, const NormalEqOptions& options);
  /// Applies the camera step, back-substitutes the points and evaluates the
  /// cost of the candidate.
  TrialCostMsg trial(const DeltaXcMsg& delta);
  void resolve(bool commit);
  GroupPointsMsg points() const;

 private:
  std::uint32_t group_id_;
  std::uint32_t total_cameras_;
  double huber_scale_;
  BaProblem problem_;
  std::vector<std::uint32_t> camera_ids_;
  std::vector<std::uint32_t> intrinsics_ids_;  // global intrinsics entry per local entry
  std::vector<std::uint32_t> point_ids_;
  std::vector<std::uint32_t> local_to_global_;
  std::unique_ptr<ParameterLayout> layout_;
  BlockLayout blocks_;
  std::vector<PointSystem> point_systems_;
  std::vector<Point3D> saved_points_;
  bool pending_ = false;
};

/// Sub-RCS envelope of a group for the given camera state.
SubRcsEnvelopeMsg worker_form_subrcs(const TiePointGroupMsg& group,
                                     const PoseBroadcastMsg& poses,
                                     const NormalEqOptions& options = {});

struct WorkerOptions {
  /// Formation threads per worker; partial sums merged in thread order.
  std::size_t n_threads = 1;
  /// Failure injection: drop the connection after receiving this many frames
  /// (0 disables).
  std::uint32_t fail_after_frames = 0;
};

/// Protocol state machine; transport-independent.
class WorkerSession {
 public:
  explicit WorkerSession(WorkerOptions options = {});
  /// Processes one incoming frame and returns the replies in send order.
  std::vector<Frame> handle(const Frame& in);
  bool finished() const { return finished_; }
  std::size_t num_groups() const { return groups_.size(); }

 private:
  WorkerOptions options_;
  std::map<std::uint32_t, GroupState> groups_;
  bool finished_ = false;
};

/// Serves one main-node session over `channel` until Stop. Errors are
/// reported to the peer as an Error frame and rethrown. Returns false when
/// the session ended through failure injection.
bool serve_worker(Channel& channel, const WorkerOptions& options = {});

}  // namespace dba
