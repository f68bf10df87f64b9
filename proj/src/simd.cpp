#include "dsdpg/simd.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define DSDPG_X86 1
#include <immintrin.h>
#endif

namespace dsdpg::simd {

namespace {

std::atomic<Backend> g_backend{Backend::Auto};

bool cpu_has_avx2_fma() {
#if defined(DSDPG_X86) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool use_avx2() {
  Backend b = g_backend.load(std::memory_order_relaxed);
  if (b == Backend::Scalar) return false;
  if (b == Backend::Avx2) return true;
  static const bool has = cpu_has_avx2_fma();
  return has;
}

// ---------------------------------------------------------------- scalar

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vexp_scalar(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void vsqrt_scalar(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x[i]);
}

// c[m x n] = op(a) op(b); a_rs/a_cs are the strides of op(a), etc.
void matmul_scalar(double* c, const double* a, const double* b, std::size_t m,
                   std::size_t k, std::size_t n, std::size_t a_rs,
                   std::size_t a_cs, std::size_t b_rs, std::size_t b_cs) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * a_rs + l * a_cs];
      if (ail == 0.0) continue;
      const double* bl = b + l * b_rs;
      if (b_cs == 1) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += ail * bl[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += ail * bl[j * b_cs];
      }
    }
  }
}

// ---------------------------------------------------------------- avx2

#if defined(DSDPG_X86) && (defined(__GNUC__) || defined(__clang__))
#define DSDPG_TARGET_AVX2 __attribute__((target("avx2,fma")))

DSDPG_TARGET_AVX2 double hsum4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

DSDPG_TARGET_AVX2 double dot_avx2(const double* a, const double* b,
                                  std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum4(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

DSDPG_TARGET_AVX2 void axpy_avx2(double* y, double alpha, const double* x,
                                 std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Cephes-style exp on 4 lanes: exp(x) = 2^n * (1 + 2 px/(Q - px)).
DSDPG_TARGET_AVX2 __m256d exp4(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d hi = _mm256_set1_pd(709.436);
  const __m256d lo = _mm256_set1_pd(-708.396);

  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  __m256d nf = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                               _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(nf, c1, x);
  x = _mm256_fnmadd_pd(nf, c2, x);

  __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^n through the exponent bits
  __m128i n32 = _mm256_cvtpd_epi32(nf);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_slli_epi64(n64, 52);
  __m256i bits = _mm256_add_epi64(_mm256_castpd_si256(e), n64);
  return _mm256_castsi256_pd(bits);
}

DSDPG_TARGET_AVX2 void vexp_avx2(double* out, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

DSDPG_TARGET_AVX2 void vsqrt_avx2(double* out, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::sqrt(x[i]);
}

// 4-row by 8-column register tile; a(i,l) read through explicit strides so the
// same kernel serves NN (a_cs=1) and TN (a_cs=m over the stored matrix).
DSDPG_TARGET_AVX2 void matmul_bcast_avx2(double* c, const double* a,
                                         const double* b, std::size_t m,
                                         std::size_t k, std::size_t n,
                                         std::size_t a_rs, std::size_t a_cs) {
  std::memset(c, 0, m * n * sizeof(double));
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * a_rs;
    const double* a1 = a + (i + 1) * a_rs;
    const double* a2 = a + (i + 2) * a_rs;
    const double* a3 = a + (i + 3) * a_rs;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t l = 0; l < k; ++l) {
        const __m256d b0 = _mm256_loadu_pd(b + l * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + l * n + j + 4);
        __m256d va = _mm256_set1_pd(a0[l * a_cs]);
        c00 = _mm256_fmadd_pd(va, b0, c00);
        c01 = _mm256_fmadd_pd(va, b1, c01);
        va = _mm256_set1_pd(a1[l * a_cs]);
        c10 = _mm256_fmadd_pd(va, b0, c10);
        c11 = _mm256_fmadd_pd(va, b1, c11);
        va = _mm256_set1_pd(a2[l * a_cs]);
        c20 = _mm256_fmadd_pd(va, b0, c20);
        c21 = _mm256_fmadd_pd(va, b1, c21);
        va = _mm256_set1_pd(a3[l * a_cs]);
        c30 = _mm256_fmadd_pd(va, b0, c30);
        c31 = _mm256_fmadd_pd(va, b1, c31);
      }
      _mm256_storeu_pd(c + (i + 0) * n + j, c00);
      _mm256_storeu_pd(c + (i + 0) * n + j + 4, c01);
      _mm256_storeu_pd(c + (i + 1) * n + j, c10);
      _mm256_storeu_pd(c + (i + 1) * n + j + 4, c11);
      _mm256_storeu_pd(c + (i + 2) * n + j, c20);
      _mm256_storeu_pd(c + (i + 2) * n + j + 4, c21);
      _mm256_storeu_pd(c + (i + 3) * n + j, c30);
      _mm256_storeu_pd(c + (i + 3) * n + j + 4, c31);
    }
    for (; j < n; ++j) {
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (std::size_t l = 0; l < k; ++l) {
        const double bv = b[l * n + j];
        s0 += a0[l * a_cs] * bv;
        s1 += a1[l * a_cs] * bv;
        s2 += a2[l * a_cs] * bv;
        s3 += a3[l * a_cs] * bv;
      }
      c[(i + 0) * n + j] = s0;
      c[(i + 1) * n + j] = s1;
      c[(i + 2) * n + j] = s2;
      c[(i + 3) * n + j] = s3;
    }
  }
  for (; i < m; ++i) {
    const double* ar = a + i * a_rs;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) axpy_avx2(crow, ar[l * a_cs], b + l * n, n);
  }
}

// C = A * B^T: rows of both operands are contiguous, so use dot products.
DSDPG_TARGET_AVX2 void matmul_nt_avx2(double* c, const double* a,
                                      const double* b, std::size_t m,
                                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot_avx2(ar, b + j * k, k);
  }
}
#endif  // DSDPG_X86

}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

Backend active_backend() { return use_avx2() ? Backend::Avx2 : Backend::Scalar; }

const char* backend_name() { return use_avx2() ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) {
#ifdef DSDPG_X86
  if (use_avx2()) return dot_avx2(a, b, n);
#endif
  return dot_scalar(a, b, n);
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
#ifdef DSDPG_X86
  if (use_avx2()) return axpy_avx2(y, alpha, x, n);
#endif
  axpy_scalar(y, alpha, x, n);
}

void vexp(double* out, const double* x, std::size_t n) {
#ifdef DSDPG_X86
  if (use_avx2()) return vexp_avx2(out, x, n);
#endif
  vexp_scalar(out, x, n);
}

void vsqrt(double* out, const double* x, std::size_t n) {
#ifdef DSDPG_X86
  if (use_avx2()) return vsqrt_avx2(out, x, n);
#endif
  vsqrt_scalar(out, x, n);
}

void matmul(double* c, const double* a, const double* b, std::size_t m,
            std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  // strides of op(a)/op(b) over the stored row-major buffers
  const std::size_t a_rs = trans_a ? 1 : k;
  const std::size_t a_cs = trans_a ? m : 1;
  const std::size_t b_rs = trans_b ? 1 : n;
  const std::size_t b_cs = trans_b ? k : 1;
#ifdef DSDPG_X86
  if (use_avx2()) {
    if (!trans_b) {
      matmul_bcast_avx2(c, a, b, m, k, n, a_rs, a_cs);
      return;
    }
    if (!trans_a) {  // NT
      matmul_nt_avx2(c, a, b, m, k, n);
      return;
    }
    // TT is rare; fall through to the reference loop.
  }
#endif
  matmul_scalar(c, a, b, m, k, n, a_rs, a_cs, b_rs, b_cs);
}

}  // namespace dsdpg::simd
