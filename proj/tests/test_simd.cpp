#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ralign/sampling.hpp"
#include "ralign/simd.hpp"
#include "test_support.hpp"

using namespace ralign;

namespace {

std::vector<double> random_values(CounterRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = test_support::uniform(rng, -2.0, 2.0);
  return v;
}

// Sum of |a_i b_i|, the natural scale for dot-product rounding error.
double abs_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  const auto& k = simd::scalar_kernels();
  CounterRng rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
    const auto a = random_values(rng, n);
    const auto b = random_values(rng, n);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
  }
  // 2x3 gemv by hand.
  const double m[] = {1, 2, 3, 4, 5, 6};
  const double x[] = {1, -1, 2};
  double y[2];
  k.gemv(m, 2, 3, x, y);
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 11.0);
}

TEST_CASE("vectorized kernels agree with the scalar reference") {
  const auto& ref = simd::scalar_kernels();
  for (simd::Isa isa : simd::available_isas()) {
    REQUIRE(simd::set_isa(isa));
    const auto& k = simd::kernels();
    CHECK(k.isa == isa);
    CAPTURE(simd::isa_name(isa));
    CounterRng rng(42);
    for (std::size_t n = 0; n < 70; ++n) {
      const auto a = random_values(rng, n);
      const auto b = random_values(rng, n);

      const double d_ref = ref.dot(a.data(), b.data(), n);
      const double d = k.dot(a.data(), b.data(), n);
      CHECK(std::abs(d - d_ref) <= 1e-14 * (abs_dot(a, b) + 1.0));

      auto y_ref = random_values(rng, n);
      auto y = y_ref;
      ref.axpy(0.37, a.data(), y_ref.data(), n);
      k.axpy(0.37, a.data(), y.data(), n);
      CHECK(y == y_ref);

      const std::size_t rows = n % 9 + 1;
      const auto u = random_values(rng, rows);
      auto m_ref = random_values(rng, rows * n);
      auto m = m_ref;
      ref.rank1(-1.5, u.data(), rows, b.data(), n, m_ref.data());
      k.rank1(-1.5, u.data(), rows, b.data(), n, m.data());
      CHECK(m == m_ref);

      std::vector<double> g_ref(rows), g(rows);
      ref.gemv(m_ref.data(), rows, n, a.data(), g_ref.data());
      k.gemv(m_ref.data(), rows, n, a.data(), g.data());
      for (std::size_t r = 0; r < rows; ++r) CHECK(g[r] == doctest::Approx(g_ref[r]).epsilon(1e-12));

      simd::AdamStep step{1e-3, 0.9, 0.999, 1e-8, 0.01, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      auto p_ref = random_values(rng, n);
      auto p = p_ref;
      auto m1_ref = random_values(rng, n);
      auto m1 = m1_ref;
      std::vector<double> v_ref(n), v(n);
      for (std::size_t i = 0; i < n; ++i) v_ref[i] = v[i] = std::abs(m1_ref[i]);
      ref.adamw(p_ref.data(), a.data(), m1_ref.data(), v_ref.data(), n, step);
      k.adamw(p.data(), a.data(), m1.data(), v.data(), n, step);
      CHECK(p == p_ref);
      CHECK(m1 == m1_ref);
      CHECK(v == v_ref);
    }
  }
  simd::set_isa(simd::Isa::kScalar);
}

TEST_CASE("identity gemv reproduces the input exactly on every isa") {
  for (simd::Isa isa : simd::available_isas()) {
    REQUIRE(simd::set_isa(isa));
    CounterRng rng(7);
    const std::size_t n = 37;
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    const auto x = random_values(rng, n);
    std::vector<double> y(n);
    simd::gemv(eye, n, n, x, y);
    CHECK(y == x);
  }
  simd::set_isa(simd::Isa::kScalar);
}

TEST_CASE("span wrappers reject size mismatches") {
  std::vector<double> a(3), b(4), m(12);
  CHECK_THROWS_AS(simd::dot(a, b), std::invalid_argument);
  CHECK_THROWS_AS(simd::axpy(1.0, a, b), std::invalid_argument);
  CHECK_THROWS_AS(simd::gemv(m, 3, 4, a, a), std::invalid_argument);
  CHECK_THROWS_AS(simd::rank1(1.0, a, a, m), std::invalid_argument);
}

TEST_CASE("scalar isa is always available") {
  const auto isas = simd::available_isas();
  REQUIRE_FALSE(isas.empty());
  CHECK(isas.front() == simd::Isa::kScalar);
  CHECK(simd::set_isa(simd::Isa::kScalar));
  CHECK(simd::active_isa() == simd::Isa::kScalar);
  CHECK(simd::isa_name(simd::Isa::kAvx2) == "avx2");
}
