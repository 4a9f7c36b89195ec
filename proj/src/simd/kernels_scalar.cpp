#include <cmath>

#include "ralign/simd.hpp"

namespace ralign::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemv_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(m + r * cols, x, cols);
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void rank1_scalar(double scale, const double* u, std::size_t rows, const double* v,
                  std::size_t cols, double* m) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double su = scale * u[r];
    double* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += su * v[c];
  }
}

void adamw_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                  const AdamStep& s) {
  const double one_minus_b1 = 1.0 - s.beta1;
  const double one_minus_b2 = 1.0 - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / s.bias_correction1;
    const double v_hat = v[i] / s.bias_correction2;
    const double update = m_hat / (std::sqrt(v_hat) + s.eps) + s.weight_decay * param[i];
    param[i] = param[i] - s.lr * update;
  }
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{Isa::kScalar, dot_scalar,   gemv_scalar,
                                 axpy_scalar,  rank1_scalar, adamw_scalar};
  return table;
}

}  // namespace ralign::simd
