// Full Ladybug-1723 checks. Needs the BAL file named by DBA_LADYBUG_PATH;
// exits with 77 (skipped) when it is not available.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "dba/bal_io.hpp"
#include "dba/lm.hpp"
#include "dba/report.hpp"

int main() {
  using namespace dba;
  const char* path = std::getenv("DBA_LADYBUG_PATH");
  if (!path || !std::filesystem::exists(path)) {
    std::printf("ladybug: SKIP (set DBA_LADYBUG_PATH to problem-1723-156502-pre.txt)\n");
    return 77;
  }
  auto problem = load_bal(path);
  const double sparsity = rcs_sparsity(problem);
  const bool sparsity_ok = std::abs(sparsity - 0.040) <= 0.002;
  std::printf("sparsity: %s  %.4f (expected 0.040 +- 0.002)\n", sparsity_ok ? "PASS" : "FAIL",
              sparsity);

  const auto t0 = std::chrono::steady_clock::now();
  const auto trace = lm_solve(problem, LmConfig{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool rms_ok = trace.final_rms >= 1.0 && trace.final_rms <= 1.3 && secs <= 1800.0;
  std::printf("accuracy: %s  rms %.4f px in %.1f s (expected [1.0, 1.3] px within 1800 s)\n",
              rms_ok ? "PASS" : "FAIL", trace.final_rms, secs);
  return sparsity_ok && rms_ok ? 0 : 1;
}
