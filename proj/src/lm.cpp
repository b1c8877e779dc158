#include "dba/lm.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dba/errors.hpp"
#include "dba/memory_model.hpp"

namespace dba {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

void LmConfig::validate() const {
  if (!(lambda_up > 1.0) || !(lambda_down > 1.0)) {
    throw std::invalid_argument("lambda factors must be > 1");
  }
  if (!(lambda_init > 0.0)) throw std::invalid_argument("lambda_init must be > 0");
  if (!(function_tolerance > 0.0) || !(pcg_tolerance > 0.0)) {
    throw std::invalid_argument("tolerances must be > 0");
  }
  if (max_consecutive_rejections == 0) {
    throw std::invalid_argument("max_consecutive_rejections must be >= 1");
  }
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kFunctionTolerance: return "function_tolerance";
    case Termination::kCostFloor: return "cost_floor";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kMaxRejections: return "max_rejections";
  }
  return "unknown";
}

std::size_t LmTrace::accepted_count() const {
  std::size_t n = 0;
  for (const auto& r : iterations) n += r.accepted ? 1 : 0;
  return n;
}

std::vector<double> LmTrace::accepted_costs() const {
  std::vector<double> costs{initial_cost};
  for (const auto& r : iterations) {
    if (r.accepted) costs.push_back(r.cost);
  }
  return costs;
}

double total_cost(const BaProblem& problem, double huber_scale, std::size_t* skipped) {
  double cost = 0.0;
  std::uint32_t skip = 0;
  for (std::uint32_t p = 0; p < problem.num_points(); ++p) {
    cost += point_cost(problem, p, huber_scale, &skip);
  }
  if (skipped) *skipped = skip;
  return cost;
}

double rms_pixels(const BaProblem& problem) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& obs : problem.observations) {
    try {
      const Eigen::Vector2d e =
          project(problem.poses[obs.camera_id], problem.intrinsics_of(obs.camera_id),
                  problem.points[obs.point_id]) -
          obs.pixel;
      sum += e.squaredNorm();
      ++used;
    } catch (const DegenerateProjection&) {
    }
  }
  return used == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(used));
}

bool step_quality_guard(double prev_cost, double trial_cost) {
  return std::isfinite(trial_cost) && trial_cost < prev_cost;
}

SerialBackend::SerialBackend(BaProblem& problem, NormalEqOptions options)
    : problem_(problem), layout_((problem.finalize(), problem)),
      blocks_(layout_.block_sizes()), options_(options) {
  all_points_.resize(problem.num_points());
  std::iota(all_points_.begin(), all_points_.end(), 0u);
}

std::size_t SerialBackend::num_observations() const { return problem_.observations.size(); }

RcsContribution SerialBackend::linearize(std::uint32_t, double lambda) {
  if (all_points_.empty()) throw AllPointsDegenerate("problem has no points");
  auto contribution =
      form_rcs_contribution(problem_, layout_, all_points_, lambda, options_, true);
  if (contribution.excluded_points.size() == all_points_.size()) {
    throw AllPointsDegenerate("every point was excluded from the reduced camera system");
  }
  point_systems_ = std::move(contribution.point_systems);
  contribution.point_systems.clear();
  return contribution;
}

TrialEvaluation SerialBackend::evaluate_trial(std::uint32_t,
                                              std::span<const double> delta_c) {
  if (delta_c.size() != blocks_.total_dim()) {
    throw DimensionMismatch("camera step has wrong dimension");
  }
  saved_poses_ = problem_.poses;
  saved_intrinsics_ = problem_.intrinsics;
  saved_points_ = problem_.points;
  pending_ = true;

  apply_camera_step(problem_, blocks_.offsets(), delta_c);
  const auto dp = back_substitute_points(point_systems_, blocks_, delta_c);
  TrialEvaluation out;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    problem_.points[point_systems_[i].point_id].position += dp[i];
    out.point_step_squared_norm += dp[i].squaredNorm();
  }
  out.cost = total_cost(problem_, options_.huber_scale);
  return out;
}

void SerialBackend::resolve_trial(bool accept) {
  if (!pending_) return;
  if (!accept) {
    problem_.poses = std::move(saved_poses_);
    problem_.intrinsics = std::move(saved_intrinsics_);
    problem_.points = std::move(saved_points_);
  }
  saved_poses_.clear();
  saved_intrinsics_.clear();
  saved_points_.clear();
  pending_ = false;
}

void SerialBackend::finish(BaProblem& problem) {
  resolve_trial(false);
  point_systems_.clear();
  if (&problem != &problem_) {
    problem.poses = problem_.poses;
    problem.intrinsics = problem_.intrinsics;
    problem.points = problem_.points;
  }
}

LmTrace lm_solve(LmBackend& backend, BaProblem& problem, const LmConfig& config) {
  config.validate();
  const auto t_start = Clock::now();
  LmTrace trace;
  trace.observations = backend.num_observations();
  const double n_obs = static_cast<double>(std::max<std::size_t>(1, trace.observations));
  auto rms_of = [&](double cost) { return std::sqrt(2.0 * cost / n_obs); };

  PcgConfig pcg;
  pcg.rel_tolerance = config.pcg_tolerance;
  pcg.max_iterations = config.pcg_max_iterations;
  pcg.n_groups = config.pcg_threads;
  pcg.pool = config.pool;

  double lambda = config.lambda_init;
  double cost = 0.0;
  std::uint32_t rejections = 0;
  trace.termination = Termination::kMaxIterations;

  for (std::uint32_t it = 0; it < config.max_iterations; ++it) {
    const auto t_iter = Clock::now();
    IterationRecord rec;
    rec.index = it;
    rec.lambda = lambda;

    auto t0 = Clock::now();
    RcsContribution contribution = backend.linearize(it, lambda);
    if (it == 0) {
      cost = contribution.cost;
      trace.initial_cost = cost;
      trace.initial_rms = rms_of(cost);
      if (cost <= config.min_cost) {
        trace.termination = Termination::kCostFloor;
        break;
      }
    }
    rec.excluded_points = static_cast<std::uint32_t>(contribution.excluded_points.size());
    RcsSystem sys = finalize_rcs(std::move(contribution), lambda, config.fix_first_camera);
    rec.times.formation = seconds_since(t0);
    trace.peak_rcs_bytes = std::max(trace.peak_rcs_bytes, audited_bytes(sys.r));

    t0 = Clock::now();
    PcgResult solved = pcg_solve(sys.r, sys.b, sys.preconditioner, pcg);
    rec.times.solve = seconds_since(t0);
    rec.pcg_iterations = solved.report.iterations;
    rec.pcg_status = solved.report.status;

    t0 = Clock::now();
    const TrialEvaluation trial = backend.evaluate_trial(it, solved.y);
    rec.trial_cost = trial.cost;
    rec.step_norm = std::sqrt(squared_norm(solved.y) + trial.point_step_squared_norm);
    rec.accepted = step_quality_guard(cost, trial.cost);
    backend.resolve_trial(rec.accepted);
    rec.times.update = seconds_since(t0);

    bool stop = false;
    if (rec.accepted) {
      const double relative_decrease = (cost - trial.cost) / cost;
      cost = trial.cost;
      lambda /= config.lambda_down;
      rejections = 0;
      if (cost <= config.min_cost) {
        trace.termination = Termination::kCostFloor;
        stop = true;
      } else if (relative_decrease < config.function_tolerance) {
        trace.termination = Termination::kFunctionTolerance;
        stop = true;
      }
    } else {
      lambda *= config.lambda_up;
      if (++rejections >= config.max_consecutive_rejections) {
        trace.termination = Termination::kMaxRejections;
        stop = true;
      }
    }
    rec.cost = cost;
    rec.rms = rms_of(cost);
    rec.seconds = seconds_since(t_iter);
    trace.total_times.formation += rec.times.formation;
    trace.total_times.solve += rec.times.solve;
    trace.total_times.update += rec.times.update;
    trace.iterations.push_back(rec);
    if (stop) break;
  }

  backend.finish(problem);
  trace.final_cost = cost;
  trace.final_rms = rms_pixels(problem);
  trace.seconds = seconds_since(t_start);
  return trace;
}

LmTrace lm_solve(BaProblem& problem, const LmConfig& config, const NormalEqOptions& options) {
  SerialBackend backend(problem, options);
  return lm_solve(backend, problem, config);
}

void write_trace(std::ostream& out, const LmTrace& trace) {
  out << "# iter cost rms_px lambda pcg_iters accepted seconds\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  for (const auto& r : trace.iterations) {
    out << r.index << ' ' << std::setprecision(12) << r.cost << ' ' << std::setprecision(6)
        << r.rms << ' ' << r.lambda << ' ' << r.pcg_iterations << ' '
        << (r.accepted ? 1 : 0) << ' ' << r.seconds << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

void write_summary(std::ostream& out, const LmTrace& trace) {
  const auto precision = out.precision();
  out << std::setprecision(12);
  out << "initial_cost = " << trace.initial_cost << '\n'
      << "initial_rms_px = " << trace.initial_rms << '\n'
      << "final_cost = " << trace.final_cost << '\n'
      << "final_rms_px = " << trace.final_rms << '\n'
      << "observations = " << trace.observations << '\n'
      << "iterations = " << trace.iterations.size() << '\n'
      << "accepted = " << trace.accepted_count() << '\n'
      << "termination = " << termination_name(trace.termination) << '\n'
      << "peak_rcs_bytes = " << trace.peak_rcs_bytes << '\n'
      << "time_formation_s = " << trace.total_times.formation << '\n'
      << "time_solve_s = " << trace.total_times.solve << '\n'
      << "time_update_s = " << trace.total_times.update << '\n'
      << "time_total_s = " << trace.seconds << '\n';
  out.precision(precision);
}

}  // namespace dba
