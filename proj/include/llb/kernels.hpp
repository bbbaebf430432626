#pragma once

#include <cstddef>
#include <span>

// Dense row-major matrix products used by the network. Every kernel
// overwrites its output (no accumulation into existing contents).
//
// llb::kernels::*        OpenMP-parallel, register-blocked versions.
// llb::kernels::serial::* naive triple loops kept as the reference the
//                         parallel kernels are tested and benchmarked against.
//
// Parallel kernels split work over output rows only, so each output element
// is produced by one thread with a fixed summation order: results are
// bitwise reproducible regardless of thread count.

namespace llb::kernels {

// c[n x m] = a[n x k] * b[m x k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);

// c[n x m] = a[n x k] * b[k x m]
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);

// c[n x m] = a[k x n]^T * b[k x m]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);

double dot(std::span<const double> x, std::span<const double> y);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace serial {

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);
double dot(std::span<const double> x, std::span<const double> y);

}  // namespace serial

}  // namespace llb::kernels
