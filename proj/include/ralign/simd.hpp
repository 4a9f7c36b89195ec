#pragma once

// Dense double-precision kernels used by retrieval, the reranker head and the
// optimizer. Every kernel has a scalar reference implementation; vectorized
// variants (AVX2+FMA on x86-64, NEON on aarch64) are selected once at runtime.
//
// Reductions (dot, gemv) may differ from the scalar reference in the last few
// ulps because of lane-wise summation. Elementwise kernels (axpy, rank1,
// adamw) are bit-identical to the reference.

#include <cstddef>
#include <span>
#include <string_view>

namespace ralign::simd {

enum class Isa { kScalar, kAvx2, kNeon };

struct AdamStep {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // 1 - beta^t, precomputed by the caller.
  double bias_correction1 = 1.0;
  double bias_correction2 = 1.0;
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[r] = sum_c m[r*cols + c] * x[c]
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // m[r*cols + c] += scale * u[r] * v[c]
  void (*rank1)(double scale, const double* u, std::size_t rows, const double* v, std::size_t cols,
                double* m);
  // Decoupled-weight-decay Adam update, in place.
  void (*adamw)(double* param, const double* grad, double* m, double* v, std::size_t n,
                const AdamStep& step);
};

const KernelTable& scalar_kernels() noexcept;
#if defined(RALIGN_HAVE_AVX2)
const KernelTable& avx2_kernels() noexcept;
#endif
#if defined(RALIGN_HAVE_NEON)
const KernelTable& neon_kernels() noexcept;
#endif

/// Kernels for the active ISA. Chosen on first use from CPU features; the
/// RALIGN_SIMD environment variable ("scalar", "avx2", "neon") overrides.
const KernelTable& kernels() noexcept;

/// ISAs compiled into this build and supported by the running CPU.
std::span<const Isa> available_isas() noexcept;

/// Forces the active ISA. Returns false when it is unavailable here.
bool set_isa(Isa isa) noexcept;
Isa active_isa() noexcept;
std::string_view isa_name(Isa isa) noexcept;

// Span-based conveniences over kernels().

double dot(std::span<const double> a, std::span<const double> b);
void gemv(std::span<const double> m, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
void rank1(double scale, std::span<const double> u, std::span<const double> v, std::span<double> m);
void adamw(std::span<double> param, std::span<const double> grad, std::span<double> m,
           std::span<double> v, const AdamStep& step);

}  // namespace ralign::simd
