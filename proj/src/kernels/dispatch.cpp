#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"
#include "proxyforge/kernels.hpp"

namespace proxyforge::kernels {

namespace {

using namespace detail;

constexpr KernelTable kScalar{
    "scalar",        max_f64_scalar,           dot_f64_scalar,
    axpy_f64_scalar, sum_f64_scalar,           sum_sq_dev_f64_scalar,
    laplacian_row_f64_scalar, chi_square_f64_scalar, relu_f64_scalar,
};

#if PROXYFORGE_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2{
    "avx2",        max_f64_avx2,           dot_f64_avx2,
    axpy_f64_avx2, sum_f64_avx2,           sum_sq_dev_f64_avx2,
    laplacian_row_f64_avx2, chi_square_f64_avx2, relu_f64_avx2,
};
#endif

const KernelTable& resolve() {
  const char* forced = std::getenv("PROXYFORGE_SIMD");
  if (forced && std::strcmp(forced, "scalar") == 0) return kScalar;
  if (const KernelTable* t = avx2()) return *t;
  return kScalar;
}

}  // namespace

const KernelTable& scalar() { return kScalar; }

const KernelTable* avx2() {
#if PROXYFORGE_HAVE_AVX2_KERNELS
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = resolve();
  return table;
}

}  // namespace proxyforge::kernels
