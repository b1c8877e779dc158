#include <atomic>
#include <cassert>
#include <stdexcept>
#include <string>

#include "kernel_tables.hpp"

namespace dba::kernels {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(DBA_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(DBA_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() {
  if (cpu_supports(Isa::kAvx2)) return Isa::kAvx2;
  if (cpu_supports(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{&table_for(best_isa())};
  return table;
}

std::atomic<Isa>& current_isa() {
  static std::atomic<Isa> isa{best_isa()};
  return isa;
}

const KernelTable& active() {
  return *current().load(std::memory_order_relaxed);
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& table_for(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument("kernel variant not available: " +
                                std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(DBA_HAVE_AVX2)
    case Isa::kAvx2: return detail::kAvx2Table;
#endif
#if defined(DBA_HAVE_NEON)
    case Isa::kNeon: return detail::kNeonTable;
#endif
    default: return detail::kScalarTable;
  }
}

Isa active_isa() { return current_isa().load(); }

void set_active_isa(Isa isa) {
  current().store(&table_for(isa));
  current_isa().store(isa);
}

void reset_active_isa() { set_active_isa(best_isa()); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  assert(x.size() == y.size());
  active().xpby(x.data(), beta, y.data(), x.size());
}

void gemv_add(const double* a, std::size_t rows, std::size_t cols,
              const double* x, double* y) {
  active().gemv_add(a, rows, cols, x, y);
}

void gemv_t_add(const double* a, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  active().gemv_t_add(a, rows, cols, x, y);
}

}  // namespace dba::kernels
