#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation; an AVX2/FMA variant is selected at runtime when the CPU
// supports it. Setting PROXYFORGE_SIMD=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace proxyforge::kernels {

struct KernelTable {
  std::string_view name;
  /// out[i] = max(a[i], b[i])
  void (*max_f64)(const double* a, const double* b, double* out, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum_f64)(const double* a, std::size_t n);
  /// Σ (a[i] - mean)²
  double (*sum_sq_dev_f64)(const double* a, double mean, std::size_t n);
  /// 5-point Laplacian of the middle row. `up`, `mid`, `down` point at rows
  /// padded by one replicated sample on each side (length n + 2); `out`
  /// receives n values.
  void (*laplacian_row_f64)(const double* up, const double* mid, const double* down, double* out,
                            std::size_t n);
  /// Σ_{a+b>0} (a-b)² / (a+b)
  double (*chi_square_f64)(const double* a, const double* b, std::size_t n);
  /// x[i] = max(x[i], 0)
  void (*relu_f64)(double* x, std::size_t n);
};

const KernelTable& scalar();
/// nullptr when the host lacks AVX2/FMA or the build has no x86 support.
const KernelTable* avx2();
/// The table used by the library; resolved once per process.
const KernelTable& active();

}  // namespace proxyforge::kernels
