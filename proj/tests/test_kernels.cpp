#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "proxyforge/kernels.hpp"
#include "support.hpp"

namespace k = proxyforge::kernels;

namespace {

std::vector<double> draw(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = pftest::uniform(rng, lo, hi);
  return v;
}

bool close(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

// Odd lengths exercise the vector tails.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 63, 257, 1000};

}  // namespace

TEST_CASE("scalar kernels agree with plain loops") {
  const k::KernelTable& s = k::scalar();
  std::mt19937_64 rng(1);
  for (std::size_t n : kLengths) {
    const auto a = draw(rng, n, -3, 3), b = draw(rng, n, 0, 1), c = draw(rng, n, 0, 1);
    double dot = 0, sum = 0, chi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += a[i] * b[i];
      sum += a[i];
      if (b[i] + c[i] > 0) chi += (b[i] - c[i]) * (b[i] - c[i]) / (b[i] + c[i]);
    }
    CHECK(close(s.dot_f64(a.data(), b.data(), n), dot));
    CHECK(close(s.sum_f64(a.data(), n), sum));
    CHECK(close(s.chi_square_f64(b.data(), c.data(), n), chi));
    const double mean = n ? sum / n : 0.0;
    double dev = 0;
    for (double x : a) dev += (x - mean) * (x - mean);
    CHECK(close(s.sum_sq_dev_f64(a.data(), mean, n), dev));
  }
  const double z[2] = {0, 0};
  CHECK(s.chi_square_f64(z, z, 2) == 0.0);
}

TEST_CASE("laplacian_row is the 5-point stencil") {
  const double up[] = {9, 1, 2, 3, 9}, mid[] = {4, 4, 5, 6, 6}, down[] = {9, 7, 8, 9, 9};
  double out[3];
  k::scalar().laplacian_row_f64(up, mid, down, out, 3);
  CHECK(out[0] == 1 + 7 + 4 + 5 - 4 * 4);
  CHECK(out[1] == 2 + 8 + 4 + 6 - 4 * 5);
  CHECK(out[2] == 3 + 9 + 5 + 6 - 4 * 6);
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  const k::KernelTable* v = k::avx2();
  if (v == nullptr) {
    MESSAGE("no AVX2 on this host; vector path not exercised");
    return;
  }
  const k::KernelTable& s = k::scalar();
  std::mt19937_64 rng(2);
  for (std::size_t n : kLengths) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = draw(rng, n, -5, 5), b = draw(rng, n, -5, 5);
      auto p = draw(rng, n, 0, 1), q = draw(rng, n, 0, 1);
      for (std::size_t i = 0; i < n; i += 3) p[i] = q[i] = 0.0;  // zero-mass bins

      std::vector<double> o1(n), o2(n);
      s.max_f64(a.data(), b.data(), o1.data(), n);
      v->max_f64(a.data(), b.data(), o2.data(), n);
      CHECK(o1 == o2);

      CHECK(close(s.dot_f64(a.data(), b.data(), n), v->dot_f64(a.data(), b.data(), n)));
      CHECK(close(s.sum_f64(a.data(), n), v->sum_f64(a.data(), n)));
      CHECK(close(s.sum_sq_dev_f64(a.data(), 0.3, n), v->sum_sq_dev_f64(a.data(), 0.3, n)));
      CHECK(close(s.chi_square_f64(p.data(), q.data(), n), v->chi_square_f64(p.data(), q.data(), n)));

      o1 = b;
      o2 = b;
      s.axpy_f64(0.7, a.data(), o1.data(), n);
      v->axpy_f64(0.7, a.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(o1[i], o2[i], 1e-15));

      o1 = a;
      o2 = a;
      s.relu_f64(o1.data(), n);
      v->relu_f64(o2.data(), n);
      CHECK(o1 == o2);

      const auto up = draw(rng, n + 2, 0, 255), mid = draw(rng, n + 2, 0, 255), down = draw(rng, n + 2, 0, 255);
      s.laplacian_row_f64(up.data(), mid.data(), down.data(), o1.data(), n);
      v->laplacian_row_f64(up.data(), mid.data(), down.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(o1[i], o2[i], 1e-13));
    }
  }
}

TEST_CASE("the active table honours PROXYFORGE_SIMD") {
  const char* env = std::getenv("PROXYFORGE_SIMD");
  if (env != nullptr && std::string(env) == "scalar") {
    CHECK(k::active().name == k::scalar().name);
  } else if (k::avx2() != nullptr) {
    CHECK(k::active().name == k::avx2()->name);
  } else {
    CHECK(k::active().name == k::scalar().name);
  }
}
