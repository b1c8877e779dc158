#pragma once

// Levenberg-Marquardt driver over the reduced camera system. The formation of
// the RCS, back-substitution and trial cost evaluation are delegated to an
// LmBackend so the same loop drives the serial and distributed runtimes.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dba/normal_equations.hpp"
#include "dba/pcg.hpp"
#include "dba/problem.hpp"

namespace dba {

class ThreadPool;

struct LmConfig {
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  std::uint32_t max_iterations = 50;
  /// Stop once an accepted step reduces the cost by less than this fraction.
  double function_tolerance = 1e-6;
  std::uint32_t max_consecutive_rejections = 8;
  /// Stop when the cost falls to this absolute value (zero-residual problems).
  double min_cost = 1e-20;
  bool fix_first_camera = false;
  double pcg_tolerance = 1e-6;
  std::size_t pcg_max_iterations = 0;
  /// Block groups for the parallel RCS product inside PCG.
  std::size_t pcg_threads = 1;
  ThreadPool* pool = nullptr;

  /// Throws std::invalid_argument on factors <= 1 or non-positive tolerances.
  void validate() const;
};

struct PhaseTimes {
  double formation = 0.0;  // RCS formation and aggregation
  double solve = 0.0;      // PCG
  double update = 0.0;     // back-substitution and trial cost
};

struct IterationRecord {
  std::uint32_t index = 0;
  double cost = 0.0;        // cost after the iteration (unchanged on rejection)
  double trial_cost = 0.0;
  double rms = 0.0;         // sqrt(2 cost / observations)
  double lambda = 0.0;      // damping used for this iteration
  double step_norm = 0.0;   // |dx| over cameras and points
  std::size_t pcg_iterations = 0;
  PcgStatus pcg_status = PcgStatus::kConverged;
  bool accepted = false;
  std::uint32_t excluded_points = 0;
  PhaseTimes times;
  double seconds = 0.0;
};

enum class Termination {
  kFunctionTolerance,
  kCostFloor,
  kMaxIterations,
  kMaxRejections,
};
const char* termination_name(Termination t);

struct LmTrace {
  std::vector<IterationRecord> iterations;
  double initial_cost = 0.0;
  double initial_rms = 0.0;
  double final_cost = 0.0;
  double final_rms = 0.0;
  std::size_t observations = 0;
  Termination termination = Termination::kMaxIterations;
  PhaseTimes total_times;
  double seconds = 0.0;
  std::size_t peak_rcs_bytes = 0;

  std::size_t accepted_count() const;
  /// Cost before the first iteration followed by every accepted cost.
  std::vector<double> accepted_costs() const;
};

/// Result of evaluating the candidate step.
struct TrialEvaluation {
  double cost = 0.0;
  double point_step_squared_norm = 0.0;
};

/// Execution backend: owns the problem state between phases.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual const ParameterLayout& layout() const = 0;
  virtual std::size_t num_observations() const = 0;

  /// Undamped-camera RCS contribution summed over all points, with point
  /// blocks damped by lambda.
  virtual RcsContribution linearize(std::uint32_t iteration, double lambda) = 0;

  /// Applies delta_c to the cameras, back-substitutes the points and returns
  /// the cost of the candidate state. The candidate stays pending until
  /// resolve_trial.
  virtual TrialEvaluation evaluate_trial(std::uint32_t iteration,
                                         std::span<const double> delta_c) = 0;

  /// Keeps (accept) or rolls back the pending candidate.
  virtual void resolve_trial(bool accept) = 0;

  /// Writes the final state into `problem` and releases backend resources.
  virtual void finish(BaProblem& problem) = 0;
};

/// Linearizes and updates `problem` in place, optionally over several
/// formation threads.
class SerialBackend final : public LmBackend {
 public:
  explicit SerialBackend(BaProblem& problem, NormalEqOptions options = {});

  const ParameterLayout& layout() const override { return layout_; }
  std::size_t num_observations() const override;
  RcsContribution linearize(std::uint32_t iteration, double lambda) override;
  TrialEvaluation evaluate_trial(std::uint32_t iteration,
                                 std::span<const double> delta_c) override;
  void resolve_trial(bool accept) override;
  void finish(BaProblem& problem) override;

 private:
  BaProblem& problem_;
  ParameterLayout layout_;
  BlockLayout blocks_;
  NormalEqOptions options_;
  std::vector<std::uint32_t> all_points_;
  std::vector<PointSystem> point_systems_;
  std::vector<CameraPose> saved_poses_;
  std::vector<CameraIntrinsics> saved_intrinsics_;
  std::vector<Point3D> saved_points_;
  bool pending_ = false;
};

/// Cost over every point of `problem` (degenerate observations skipped).
double total_cost(const BaProblem& problem, double huber_scale = 0.0,
                  std::size_t* skipped = nullptr);

/// sqrt(sum |e|^2 / used observations) in pixels.
double rms_pixels(const BaProblem& problem);

/// Accept iff trial_cost < prev_cost; non-finite trial costs reject.
bool step_quality_guard(double prev_cost, double trial_cost);

LmTrace lm_solve(LmBackend& backend, BaProblem& problem, const LmConfig& config);

/// Serial convenience overload.
LmTrace lm_solve(BaProblem& problem, const LmConfig& config,
                 const NormalEqOptions& options = {});

/// One line per iteration: index cost rms lambda pcg_iters accepted seconds.
void write_trace(std::ostream& out, const LmTrace& trace);
/// key = value summary block.
void write_summary(std::ostream& out, const LmTrace& trace);

}  // namespace dba
