#pragma once

#include <cstddef>

// Runtime-dispatched f64 kernels. Every kernel has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant compiled with a
// per-function target attribute so the translation unit itself needs no
// special flags. The active variant is picked once via cpuid; tests can pin
// a backend with set_backend() to compare results.
//
// Note: the vector variants reassociate sums (FMA, lane-wise accumulators),
// so results agree with the scalar reference only up to rounding. Within a
// fixed backend every kernel is deterministic.

namespace dsdpg::simd {

enum class Backend { Auto, Scalar, Avx2 };

void set_backend(Backend b);
Backend active_backend();
const char* backend_name();

// c[m x n] = op(a) * op(b), row-major, c overwritten.
// op(a) is m x k after optional transposition of the stored matrix.
void matmul(double* c, const double* a, const double* b, std::size_t m,
            std::size_t k, std::size_t n, bool trans_a, bool trans_b);

double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(double* y, double alpha, const double* x, std::size_t n);

// out[i] = exp(x[i]); scalar path uses std::exp, vector path a Cephes-style
// polynomial accurate to ~1 ulp (equivalence-tested at rel 1e-14).
void vexp(double* out, const double* x, std::size_t n);

// out[i] = sqrt(x[i])
void vsqrt(double* out, const double* x, std::size_t n);

}  // namespace dsdpg::simd
