// AVX2/FMA variants, each compiled through a per-function target attribute.

#include "kernels_impl.hpp"

#if PROXYFORGE_HAVE_AVX2_KERNELS

#include <immintrin.h>

#define PF_AVX2 __attribute__((target("avx2,fma")))

namespace proxyforge::kernels::detail {

namespace {

PF_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

}  // namespace

PF_AVX2 void max_f64_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] > b[i] ? a[i] : b[i];
}

PF_AVX2 double dot_f64_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

PF_AVX2 void axpy_f64_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

PF_AVX2 double sum_f64_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

PF_AVX2 double sum_sq_dev_f64_avx2(const double* a, double mean, std::size_t n) {
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), vm);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - mean;
    s += d * d;
  }
  return s;
}

PF_AVX2 void laplacian_row_f64_avx2(const double* up, const double* mid, const double* down,
                                    double* out, std::size_t n) {
  const __m256d four = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d c = _mm256_loadu_pd(mid + i + 1);
    __m256d s = _mm256_add_pd(_mm256_loadu_pd(up + i + 1), _mm256_loadu_pd(down + i + 1));
    s = _mm256_add_pd(s, _mm256_loadu_pd(mid + i));
    s = _mm256_add_pd(s, _mm256_loadu_pd(mid + i + 2));
    // Separate multiply keeps results identical to the scalar path.
    _mm256_storeu_pd(out + i, _mm256_sub_pd(s, _mm256_mul_pd(four, c)));
  }
  for (; i < n; ++i) {
    out[i] = up[i + 1] + down[i + 1] + mid[i] + mid[i + 2] - 4.0 * mid[i + 1];
  }
}

PF_AVX2 double chi_square_f64_avx2(const double* a, const double* b, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    const __m256d den = _mm256_add_pd(va, vb);
    const __m256d mask = _mm256_cmp_pd(den, zero, _CMP_GT_OQ);
    const __m256d safe = _mm256_blendv_pd(one, den, mask);
    const __m256d d = _mm256_sub_pd(va, vb);
    const __m256d term = _mm256_div_pd(_mm256_mul_pd(d, d), safe);
    acc = _mm256_add_pd(acc, _mm256_and_pd(term, mask));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double den = a[i] + b[i];
    if (den > 0.0) {
      const double d = a[i] - b[i];
      s += d * d / den;
    }
  }
  return s;
}

PF_AVX2 void relu_f64_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace proxyforge::kernels::detail

#endif
