// NEON variants for aarch64, where Advanced SIMD is part of the baseline ISA.

#include <arm_neon.h>

#include <cmath>

#include "ralign/simd.hpp"

namespace ralign::simd {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  float64x2_t acc2 = vdupq_n_f64(0.0);
  float64x2_t acc3 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    acc2 = vfmaq_f64(acc2, vld1q_f64(a + i + 4), vld1q_f64(b + i + 4));
    acc3 = vfmaq_f64(acc3, vld1q_f64(a + i + 6), vld1q_f64(b + i + 6));
  }
  for (; i + 2 <= n; i += 2) acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  double acc = vaddvq_f64(vaddq_f64(vaddq_f64(acc0, acc1), vaddq_f64(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemv_neon(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_neon(m + r * cols, x, cols);
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void rank1_neon(double scale, const double* u, std::size_t rows, const double* v,
                std::size_t cols, double* m) {
  for (std::size_t r = 0; r < rows; ++r) axpy_neon(scale * u[r], v, m + r * cols, cols);
}

void adamw_neon(double* param, const double* grad, double* m, double* v, std::size_t n,
                const AdamStep& s) {
  const float64x2_t b1 = vdupq_n_f64(s.beta1);
  const float64x2_t b2 = vdupq_n_f64(s.beta2);
  const float64x2_t omb1 = vdupq_n_f64(1.0 - s.beta1);
  const float64x2_t omb2 = vdupq_n_f64(1.0 - s.beta2);
  const float64x2_t bc1 = vdupq_n_f64(s.bias_correction1);
  const float64x2_t bc2 = vdupq_n_f64(s.bias_correction2);
  const float64x2_t eps = vdupq_n_f64(s.eps);
  const float64x2_t wd = vdupq_n_f64(s.weight_decay);
  const float64x2_t lr = vdupq_n_f64(s.lr);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t p = vld1q_f64(param + i);
    const float64x2_t mi = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(omb1, g));
    const float64x2_t vi = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(omb2, vmulq_f64(g, g)));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t m_hat = vdivq_f64(mi, bc1);
    const float64x2_t v_hat = vdivq_f64(vi, bc2);
    const float64x2_t step = vdivq_f64(m_hat, vaddq_f64(vsqrtq_f64(v_hat), eps));
    const float64x2_t update = vaddq_f64(step, vmulq_f64(wd, p));
    vst1q_f64(param + i, vsubq_f64(p, vmulq_f64(lr, update)));
  }
  if (i < n) scalar_kernels().adamw(param + i, grad + i, m + i, v + i, n - i, s);
}

}  // namespace

const KernelTable& neon_kernels() noexcept {
  static const KernelTable table{Isa::kNeon, dot_neon,   gemv_neon,
                                 axpy_neon,  rank1_neon, adamw_neon};
  return table;
}

}  // namespace ralign::simd
