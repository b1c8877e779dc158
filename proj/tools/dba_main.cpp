// Command-line front end: solve, bench-bsmc, partition, worker, synth.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "dba/backends.hpp"
#include "dba/bal_io.hpp"
#include "dba/bsmc.hpp"
#include "dba/csr.hpp"
#include "dba/errors.hpp"
#include "dba/kernels.hpp"
#include "dba/memory_model.hpp"
#include "dba/partition.hpp"
#include "dba/ply.hpp"
#include "dba/report.hpp"
#include "dba/synthetic.hpp"
#include "dba/thread_pool.hpp"

namespace {

using namespace dba;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct InputOptions {
  std::string input;
  std::string synthetic_spec;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
  auto* bal = cmd->add_option("--input", in.input, "BAL problem file")->check(CLI::ExistingFile);
  auto* syn = cmd->add_option("--synthetic-spec", in.synthetic_spec,
                              "JSON synthetic dataset spec")
                  ->check(CLI::ExistingFile);
  bal->excludes(syn);
}

BaProblem load_input(const InputOptions& in) {
  if (!in.input.empty()) {
    LoadReport report;
    auto problem = load_bal(in.input, &report);
    if (report.pruned_cameras + report.pruned_points > 0) {
      std::cerr << "pruned " << report.pruned_cameras << " cameras and " << report.pruned_points
                << " points without observations\n";
    }
    return problem;
  }
  if (!in.synthetic_spec.empty()) {
    return synthesize(load_synthetic_spec(in.synthetic_spec)).problem;
  }
  throw CLI::ValidationError("input", "one of --input or --synthetic-spec is required");
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  InputOptions input;
  std::string mode = "serial";
  std::uint32_t workers = 1;
  std::uint32_t groups = 0;
  std::size_t threads = 1;
  std::size_t pcg_threads = 1;
  double lambda_init = 1e-4;
  double pcg_tol = 1e-6;
  std::uint32_t max_iters = 50;
  double ftol = 1e-6;
  bool fix_first_camera = false;
  double huber = 0.0;
  std::string report;
  std::string export_ply;
  bool ply_ascii = false;
  std::string output_bal;
  std::string endpoints;
  std::string endpoints_file;
  double timeout_s = 600.0;
};

int run_solve_command(const SolveArgs& a) {
  BaProblem problem = load_input(a.input);
  const ProblemStats stats = describe(problem);
  std::cout << "problem: " << stats.cameras << " cameras, " << stats.points << " points, "
            << stats.observations << " observations, sparsity " << stats.sparsity << '\n';

  LmConfig config;
  config.lambda_init = a.lambda_init;
  config.pcg_tolerance = a.pcg_tol;
  config.max_iterations = a.max_iters;
  config.function_tolerance = a.ftol;
  config.fix_first_camera = a.fix_first_camera;
  config.pcg_threads = a.pcg_threads;

  RuntimeOptions runtime;
  runtime.mode = parse_runtime_mode(a.mode);
  runtime.workers = a.workers;
  runtime.groups = a.groups;
  runtime.threads_per_worker = a.threads;
  runtime.huber_scale = a.huber;
  runtime.receive_timeout =
      std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout_s * 1000.0));
  std::string endpoint_text = a.endpoints;
  if (!a.endpoints_file.empty()) endpoint_text += "\n" + read_file(a.endpoints_file);
  runtime.endpoints = parse_endpoint_list(endpoint_text);
  if (!runtime.endpoints.empty()) {
    if (runtime.mode != RuntimeMode::kSockets) {
      throw CLI::ValidationError("--endpoints", "endpoints need --mode sockets");
    }
    runtime.workers = static_cast<std::uint32_t>(runtime.endpoints.size());
  }

  const SolveOutcome outcome = run_solve(problem, config, runtime);
  write_trace(std::cout, outcome.trace);
  write_summary(std::cout, outcome.trace);
  if (!a.report.empty()) write_report(a.report, stats, runtime, outcome);
  if (!a.export_ply.empty()) {
    export_ply(problem, a.export_ply,
               a.ply_ascii ? PlyFormat::kAscii : PlyFormat::kBinaryLittleEndian);
  }
  if (!a.output_bal.empty()) save_bal(problem, a.output_bal);
  return 0;
}

// ---- bench-bsmc -----------------------------------------------------------

struct BenchArgs {
  std::vector<double> n{1000, 10000};
  std::vector<double> c{9, 11};
  std::vector<double> alpha{0.01, 0.04, 0.1};
  std::vector<std::size_t> threads{1};
  double audit_limit_mb = 256.0;
  std::uint64_t seed = 1;
};

int run_bench_command(const BenchArgs& a) {
  std::cout << "# n c alpha csr_bytes bsmc_bytes ratio ratio_bytes audited_csr audited_bsmc"
               " audited_bsmc_compact\n";
  std::mt19937_64 rng(a.seed);
  struct Timed {
    std::size_t n, c;
    double alpha;
    BsmcMatrix m;
  };
  std::vector<Timed> timed;
  for (double n : a.n) {
    for (double c : a.c) {
      for (double alpha : a.alpha) {
        std::cout << std::setprecision(6) << n << ' ' << c << ' ' << alpha << ' ';
        try {
          std::cout << std::setprecision(12) << memory_bytes_csr(n, c, alpha) << ' '
                    << memory_bytes_bsmc(n, c, alpha) << ' ' << std::setprecision(6)
                    << memory_ratio(n, c, alpha) << ' ' << memory_ratio_exact(n, c, alpha);
        } catch (const InvalidSparsity& e) {
          std::cout << "invalid (" << e.what() << ")\n";
          continue;
        }
        const double csr_mb = memory_bytes_csr(n, c, alpha) / 1e6;
        const auto nn = static_cast<std::size_t>(n);
        const auto nonzero = alpha * n * n;
        const bool integral = std::abs(nonzero - std::round(nonzero)) < 1e-9 &&
                              (static_cast<std::size_t>(std::llround(nonzero)) - nn) % 2 == 0;
        if (csr_mb <= a.audit_limit_mb && integral) {
          const auto structure = random_uniform_structure(nn, alpha, rng);
          auto m = BsmcMatrix::from_structure(
              BlockLayout::uniform(nn, static_cast<std::uint32_t>(c)), structure);
          const CsrMatrix csr = CsrMatrix::from_bsmc(m);
          std::cout << ' ' << audited_bytes(csr) << ' ' << audited_bytes(m) << ' '
                    << audited_bytes(compact(m)) << '\n';
          timed.push_back({nn, static_cast<std::size_t>(c), alpha, std::move(m)});
        } else {
          std::cout << " - - -\n";
        }
      }
    }
  }

  std::cout << "# mat_vec timing (isa " << kernels::isa_name(kernels::active_isa())
            << "): n c alpha groups seconds\n";
  for (auto& t : timed) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : t.m.values()) v = u(rng);
    std::vector<double> x(t.m.layout().total_dim());
    for (auto& v : x) v = u(rng);
    for (auto g : a.threads) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto y = t.m.mat_vec_parallel(x, g);
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << t.n << ' ' << t.c << ' ' << t.alpha << ' ' << g << ' ' << s << '\n';
      (void)y;
    }
  }
  return 0;
}

// ---- partition ------------------------------------------------------------

int run_partition_command(const InputOptions& in, std::uint32_t groups) {
  BaProblem problem = load_input(in);
  const auto part = partition_points(problem, groups);
  std::cout << "# group points observations cameras sub_rcs_blocks\n";
  for (const auto& s : partition_stats(problem, part)) {
    std::cout << s.group << ' ' << s.points << ' ' << s.observations << ' ' << s.cameras << ' '
              << s.rcs_blocks << '\n';
  }
  return 0;
}

// ---- worker ---------------------------------------------------------------

int run_worker_command(const std::string& listen, std::size_t threads, bool once) {
  TcpListener listener(parse_endpoint(listen));
  std::cout << "listening on port " << listener.port() << std::endl;
  WorkerOptions opts;
  opts.n_threads = threads;
  do {
    auto channel = listener.accept();
    try {
      serve_worker(*channel, opts);
      std::cerr << "session finished\n";
    } catch (const std::exception& e) {
      std::cerr << "session aborted: " << e.what() << '\n';
      if (once) return 1;
    }
  } while (!once);
  return 0;
}

// ---- synth ----------------------------------------------------------------

int run_synth_command(const std::string& spec_path, SyntheticSpec spec, const std::string& out,
                      const std::string& truth, bool print_spec) {
  if (!spec_path.empty()) spec = load_synthetic_spec(spec_path);
  if (print_spec) std::cout << synthetic_spec_to_json(spec) << '\n';
  const auto data = synthesize(spec);
  const auto stats = describe(data.problem);
  std::cout << "synthetic: " << stats.cameras << " cameras, " << stats.points << " points, "
            << stats.observations << " observations, sparsity " << stats.sparsity << '\n';
  if (!out.empty()) save_bal(data.problem, out);
  if (!truth.empty()) save_bal(data.ground_truth, truth);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed bundle adjustment over a block-compressed reduced camera system"};
  app.require_subcommand(0, 1);

  bool worker_flag = false;
  std::string worker_listen = "0.0.0.0:7070";
  std::size_t worker_threads = 1;
  bool worker_once = false;
  app.add_flag("--worker", worker_flag, "Run as a socket worker (same as the worker command)");
  app.add_option("--listen", worker_listen, "host:port to listen on in worker mode");

  SolveArgs solve;
  auto* cmd_solve = app.add_subcommand("solve", "Run Levenberg-Marquardt bundle adjustment");
  add_input_options(cmd_solve, solve.input);
  cmd_solve->add_option("--mode", solve.mode, "serial | threads | sockets")
      ->check(CLI::IsMember({"serial", "threads", "sockets"}));
  cmd_solve->add_option("--workers", solve.workers, "Worker count")->check(CLI::PositiveNumber);
  cmd_solve->add_option("--groups", solve.groups, "Point groups (default: one per worker)");
  cmd_solve->add_option("--threads", solve.threads, "Formation threads per worker")
      ->check(CLI::PositiveNumber);
  cmd_solve->add_option("--pcg-threads", solve.pcg_threads, "Block groups for the PCG product")
      ->check(CLI::PositiveNumber);
  cmd_solve->add_option("--lambda-init", solve.lambda_init, "Initial damping");
  cmd_solve->add_option("--pcg-tol", solve.pcg_tol, "PCG relative tolerance");
  cmd_solve->add_option("--max-iters", solve.max_iters, "Maximum LM iterations");
  cmd_solve->add_option("--ftol", solve.ftol, "Relative cost-decrease tolerance");
  cmd_solve->add_flag("--fix-first-camera", solve.fix_first_camera, "Pin camera block 0");
  cmd_solve->add_option("--huber", solve.huber, "Huber loss scale in pixels (0 = none)");
  cmd_solve->add_option("--report", solve.report, "Write the run report here");
  cmd_solve->add_option("--export-ply", solve.export_ply, "Write the solved points as PLY");
  cmd_solve->add_flag("--ply-ascii", solve.ply_ascii, "ASCII instead of binary PLY");
  cmd_solve->add_option("--output-bal", solve.output_bal, "Write the solved problem as BAL");
  cmd_solve->add_option("--endpoints", solve.endpoints, "Worker endpoints host:port,...");
  cmd_solve->add_option("--endpoints-file", solve.endpoints_file, "File listing endpoints")
      ->check(CLI::ExistingFile);
  cmd_solve->add_option("--timeout", solve.timeout_s, "Seconds to wait for worker replies");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench-bsmc", "CSR vs BSMC memory table and timings");
  cmd_bench->add_option("--n", bench.n, "Camera counts")->delimiter(',');
  cmd_bench->add_option("--c", bench.c, "Unknowns per camera")->delimiter(',');
  cmd_bench->add_option("--alpha", bench.alpha, "Block sparsities")->delimiter(',');
  cmd_bench->add_option("--threads", bench.threads, "Block groups for mat_vec timing")
      ->delimiter(',');
  cmd_bench->add_option("--audit-limit-mb", bench.audit_limit_mb,
                        "Build and audit structures up to this CSR size");
  cmd_bench->add_option("--seed", bench.seed, "Occupancy RNG seed");

  InputOptions part_input;
  std::uint32_t part_groups = 4;
  auto* cmd_part = app.add_subcommand("partition", "Dry-run point partition statistics");
  add_input_options(cmd_part, part_input);
  cmd_part->add_option("--groups", part_groups, "Group count")->check(CLI::PositiveNumber);

  auto* cmd_worker = app.add_subcommand("worker", "Serve sub-RCS formation over TCP");
  cmd_worker->add_option("--listen", worker_listen, "host:port to listen on");
  cmd_worker->add_option("--threads", worker_threads, "Formation threads")
      ->check(CLI::PositiveNumber);
  cmd_worker->add_flag("--once", worker_once, "Exit after one session");

  std::string synth_spec_path, synth_out, synth_truth;
  bool synth_print = false;
  SyntheticSpec synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic problem as BAL");
  cmd_synth->add_option("--spec", synth_spec_path, "JSON spec (overrides the flags below)")
      ->check(CLI::ExistingFile);
  cmd_synth->add_option("--images", synth.n_images, "Image count");
  cmd_synth->add_option("--features", synth.features_per_image, "Features per image");
  cmd_synth->add_option("--sigma", synth.noise_sigma_px, "Pixel noise sigma");
  cmd_synth->add_option("--forward-overlap", synth.forward_overlap, "Forward overlap");
  cmd_synth->add_option("--side-overlap", synth.side_overlap, "Side overlap");
  cmd_synth->add_option("--seed", synth.seed, "RNG seed");
  cmd_synth->add_option("--output", synth_out, "BAL file for the perturbed problem");
  cmd_synth->add_option("--ground-truth", synth_truth, "BAL file for the ground truth");
  cmd_synth->add_flag("--print-spec", synth_print, "Print the effective spec as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (worker_flag || cmd_worker->parsed()) {
      return run_worker_command(worker_listen, worker_threads, worker_once);
    }
    if (cmd_solve->parsed()) return run_solve_command(solve);
    if (cmd_bench->parsed()) return run_bench_command(bench);
    if (cmd_part->parsed()) return run_partition_command(part_input, part_groups);
    if (cmd_synth->parsed()) {
      return run_synth_command(synth_spec_path, synth, synth_out, synth_truth, synth_print);
    }
    std::cout << app.help();
    return 0;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
