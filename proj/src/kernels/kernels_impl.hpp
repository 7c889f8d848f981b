#pragma once

#include <cstddef>

namespace proxyforge::kernels::detail {

void max_f64_scalar(const double* a, const double* b, double* out, std::size_t n);
double dot_f64_scalar(const double* a, const double* b, std::size_t n);
void axpy_f64_scalar(double alpha, const double* x, double* y, std::size_t n);
double sum_f64_scalar(const double* a, std::size_t n);
double sum_sq_dev_f64_scalar(const double* a, double mean, std::size_t n);
void laplacian_row_f64_scalar(const double* up, const double* mid, const double* down, double* out,
                              std::size_t n);
double chi_square_f64_scalar(const double* a, const double* b, std::size_t n);
void relu_f64_scalar(double* x, std::size_t n);

#if defined(__x86_64__) || defined(_M_X64)
#define PROXYFORGE_HAVE_AVX2_KERNELS 1
void max_f64_avx2(const double* a, const double* b, double* out, std::size_t n);
double dot_f64_avx2(const double* a, const double* b, std::size_t n);
void axpy_f64_avx2(double alpha, const double* x, double* y, std::size_t n);
double sum_f64_avx2(const double* a, std::size_t n);
double sum_sq_dev_f64_avx2(const double* a, double mean, std::size_t n);
void laplacian_row_f64_avx2(const double* up, const double* mid, const double* down, double* out,
                            std::size_t n);
double chi_square_f64_avx2(const double* a, const double* b, std::size_t n);
void relu_f64_avx2(double* x, std::size_t n);
#else
#define PROXYFORGE_HAVE_AVX2_KERNELS 0
#endif

}  // namespace proxyforge::kernels::detail
