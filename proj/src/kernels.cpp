#include "llb/kernels.hpp"

#include <algorithm>
#include <cassert>

namespace llb::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

bool worth_parallel(std::size_t n, std::size_t k, std::size_t m) {
  return n * k * m >= kParallelThreshold;
}

}  // namespace

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  assert(a.size() >= n * k && b.size() >= m * k && c.size() >= n * m);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((n + 3) / 4);

  // Four rows of a share each streamed row of b.
#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
    const std::size_t rows = std::min<std::size_t>(4, n - i0);
    if (rows == 4) {
      const double* a0 = A + (i0 + 0) * k;
      const double* a1 = A + (i0 + 1) * k;
      const double* a2 = A + (i0 + 2) * k;
      const double* a3 = A + (i0 + 3) * k;
      for (std::size_t j = 0; j < m; ++j) {
        const double* bj = B + j * k;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
        for (std::size_t p = 0; p < k; ++p) {
          s0 += a0[p] * bj[p];
          s1 += a1[p] * bj[p];
          s2 += a2[p] * bj[p];
          s3 += a3[p] * bj[p];
        }
        C[(i0 + 0) * m + j] = s0;
        C[(i0 + 1) * m + j] = s1;
        C[(i0 + 2) * m + j] = s2;
        C[(i0 + 3) * m + j] = s3;
      }
    } else {
      for (std::size_t i = i0; i < i0 + rows; ++i) {
        const double* ai = A + i * k;
        for (std::size_t j = 0; j < m; ++j) {
          const double* bj = B + j * k;
          double s = 0.0;
#pragma omp simd reduction(+ : s)
          for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
          C[i * m + j] = s;
        }
      }
    }
  }
}

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  assert(a.size() >= n * k && b.size() >= k * m && c.size() >= n * m);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((n + 3) / 4);

#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
    const std::size_t rows = std::min<std::size_t>(4, n - i0);
    std::fill(C + i0 * m, C + (i0 + rows) * m, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = B + p * m;
      for (std::size_t r = 0; r < rows; ++r) {
        const double coef = A[(i0 + r) * k + p];
        if (coef == 0.0) continue;
        double* ci = C + (i0 + r) * m;
#pragma omp simd
        for (std::size_t j = 0; j < m; ++j) ci[j] += coef * bp[j];
      }
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  assert(a.size() >= k * n && b.size() >= k * m && c.size() >= n * m);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((n + 3) / 4);

#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
    const std::size_t rows = std::min<std::size_t>(4, n - i0);
    std::fill(C + i0 * m, C + (i0 + rows) * m, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = B + p * m;
      for (std::size_t r = 0; r < rows; ++r) {
        const double coef = A[p * n + i0 + r];
        if (coef == 0.0) continue;
        double* ci = C + (i0 + r) * m;
#pragma omp simd
        for (std::size_t j = 0; j < m; ++j) ci[j] += coef * bp[j];
      }
    }
  }
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  const double* X = x.data();
  const double* Y = y.data();
  const std::size_t n = x.size();
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += X[i] * Y[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  const double* X = x.data();
  double* Y = y.data();
  const std::size_t n = x.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) Y[i] += alpha * X[i];
}

namespace serial {

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * m + j] = s;
    }
}

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
      c[i * m + j] = s;
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * n + i] * b[p * m + j];
      c[i * m + j] = s;
    }
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace serial

}  // namespace llb::kernels
