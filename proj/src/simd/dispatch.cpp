#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "ralign/simd.hpp"

namespace ralign::simd {
namespace {

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(RALIGN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(RALIGN_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return &scalar_kernels();
    case Isa::kAvx2:
#if defined(RALIGN_HAVE_AVX2)
      return &avx2_kernels();
#else
      return nullptr;
#endif
    case Isa::kNeon:
#if defined(RALIGN_HAVE_NEON)
      return &neon_kernels();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

std::vector<Isa> detect() {
  std::vector<Isa> out{Isa::kScalar};
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (table_for(isa) != nullptr && cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const std::vector<Isa>& available() {
  static const std::vector<Isa> isas = detect();
  return isas;
}

const KernelTable* initial_table() noexcept {
  const auto& isas = available();
  if (const char* env = std::getenv("RALIGN_SIMD")) {
    const std::string want(env);
    for (Isa isa : isas) {
      if (isa_name(isa) == want) return table_for(isa);
    }
  }
  return table_for(isas.back());
}

std::atomic<const KernelTable*>& active() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

void check_size(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("simd: size mismatch in ") + what);
}

}  // namespace

const KernelTable& kernels() noexcept { return *active().load(std::memory_order_acquire); }

std::span<const Isa> available_isas() noexcept { return available(); }

bool set_isa(Isa isa) noexcept {
  for (Isa have : available()) {
    if (have == isa) {
      active().store(table_for(isa), std::memory_order_release);
      return true;
    }
  }
  return false;
}

Isa active_isa() noexcept { return kernels().isa; }

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_size(a.size() == b.size(), "dot");
  return kernels().dot(a.data(), b.data(), a.size());
}

void gemv(std::span<const double> m, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  check_size(m.size() == rows * cols && x.size() == cols && y.size() == rows, "gemv");
  kernels().gemv(m.data(), rows, cols, x.data(), y.data());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  check_size(x.size() == y.size(), "axpy");
  kernels().axpy(a, x.data(), y.data(), x.size());
}

void rank1(double scale, std::span<const double> u, std::span<const double> v, std::span<double> m) {
  check_size(m.size() == u.size() * v.size(), "rank1");
  kernels().rank1(scale, u.data(), u.size(), v.data(), v.size(), m.data());
}

void adamw(std::span<double> param, std::span<const double> grad, std::span<double> m,
           std::span<double> v, const AdamStep& step) {
  const auto n = param.size();
  check_size(grad.size() == n && m.size() == n && v.size() == n, "adamw");
  kernels().adamw(param.data(), grad.data(), m.data(), v.data(), n, step);
}

}  // namespace ralign::simd
