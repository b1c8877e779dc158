#pragma once

// Dense double-precision inner loops used by the BSMC mat-vec and PCG.
//
// Every kernel has a portable scalar reference implementation plus SIMD
// variants (AVX2+FMA on x86-64, NEON on aarch64). The variant is chosen once
// at runtime from the host CPU features; tests can force any compiled-in
// variant to check equivalence against the scalar reference.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace dba::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Variants compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();

Isa active_isa();

/// Forces a variant. Throws std::invalid_argument if it is not available.
void set_active_isa(Isa isa);

/// Restores the best available variant.
void reset_active_isa();

double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = x + beta * y
void xpby(std::span<const double> x, double beta, std::span<double> y);

/// y += A x for a row-major rows x cols block.
void gemv_add(const double* a, std::size_t rows, std::size_t cols,
              const double* x, double* y);

/// y += A^T x for a row-major rows x cols block (y has cols entries).
void gemv_t_add(const double* a, std::size_t rows, std::size_t cols,
                const double* x, double* y);

// Raw function table, exposed for equivalence tests.
struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*xpby)(const double*, double, double*, std::size_t);
  void (*gemv_add)(const double*, std::size_t, std::size_t, const double*,
                   double*);
  void (*gemv_t_add)(const double*, std::size_t, std::size_t, const double*,
                     double*);
};

const KernelTable& table_for(Isa isa);

}  // namespace dba::kernels
