#include <algorithm>

#include "kernels_impl.hpp"

namespace proxyforge::kernels::detail {

void max_f64_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > b[i] ? a[i] : b[i];
}

double dot_f64_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f64_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_f64_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double sum_sq_dev_f64_scalar(const double* a, double mean, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - mean;
    s += d * d;
  }
  return s;
}

void laplacian_row_f64_scalar(const double* up, const double* mid, const double* down, double* out,
                              std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = up[i + 1] + down[i + 1] + mid[i] + mid[i + 2] - 4.0 * mid[i + 1];
  }
}

double chi_square_f64_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double den = a[i] + b[i];
    if (den > 0.0) {
      const double d = a[i] - b[i];
      s += d * d / den;
    }
  }
  return s;
}

void relu_f64_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace proxyforge::kernels::detail
