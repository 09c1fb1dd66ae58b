// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma; only dispatched
// to when the CPU reports support.

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "panning/kernels.hpp"

namespace panning::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// 4-row micro kernel: C[i..i+3,:] += A[i..i+3,l] * B[l,:].
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    double* c0 = C + (i + 0) * N;
    double* c1 = C + (i + 1) * N;
    double* c2 = C + (i + 2) * N;
    double* c3 = C + (i + 3) * N;
    for (std::size_t l = 0; l < K; ++l) {
      const double* b = B + l * N;
      const __m256d a0 = _mm256_set1_pd(A[(i + 0) * K + l]);
      const __m256d a1 = _mm256_set1_pd(A[(i + 1) * K + l]);
      const __m256d a2 = _mm256_set1_pd(A[(i + 2) * K + l]);
      const __m256d a3 = _mm256_set1_pd(A[(i + 3) * K + l]);
      std::size_t j = 0;
      for (; j + 4 <= N; j += 4) {
        const __m256d bv = _mm256_loadu_pd(b + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(a0, bv, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(a1, bv, _mm256_loadu_pd(c1 + j)));
        _mm256_storeu_pd(c2 + j, _mm256_fmadd_pd(a2, bv, _mm256_loadu_pd(c2 + j)));
        _mm256_storeu_pd(c3 + j, _mm256_fmadd_pd(a3, bv, _mm256_loadu_pd(c3 + j)));
      }
      for (; j < N; ++j) {
        c0[j] += A[(i + 0) * K + l] * b[j];
        c1[j] += A[(i + 1) * K + l] * b[j];
        c2[j] += A[(i + 2) * K + l] * b[j];
        c3[j] += A[(i + 3) * K + l] * b[j];
      }
    }
  }
  for (; i < M; ++i) {
    double* c = C + i * N;
    for (std::size_t l = 0; l < K; ++l) {
      const __m256d a = _mm256_set1_pd(A[i * K + l]);
      const double* b = B + l * N;
      std::size_t j = 0;
      for (; j + 4 <= N; j += 4) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(a, _mm256_loadu_pd(b + j),
                                                _mm256_loadu_pd(c + j)));
      }
      for (; j < N; ++j) c[j] += A[i * K + l] * b[j];
    }
  }
}

void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 8 <= K; k += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k),
                               acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 4),
                               _mm256_loadu_pd(b + k + 4), acc1);
      }
      double acc = hsum(_mm256_add_pd(acc0, acc1));
      for (; k < K; ++k) acc += a[k] * b[k];
      double* c = C + i * N + j;
      *c = accumulate ? *c + acc : acc;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t l = 0; l < K; ++l) {
    const double* arow = A + l * M;
    const double* b = B + l * N;
    for (std::size_t i = 0; i < M; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      const __m256d a = _mm256_set1_pd(av);
      double* c = C + i * N;
      std::size_t j = 0;
      for (; j + 4 <= N; j += 4) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(a, _mm256_loadu_pd(b + j),
                                                _mm256_loadu_pd(c + j)));
      }
      for (; j < N; ++j) c[j] += av * b[j];
    }
  }
}

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double* y, double a, const double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale(double* x, double a, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void mul(double* out, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc(double* out, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                     _mm256_loadu_pd(b + i),
                                     _mm256_loadu_pd(out + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void vabs(double* out, const double* x, std::size_t n) {
  const __m256d mask =
      _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::fabs(x[i]);
}

void relu(double* out, const double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(double* dx, const double* x, const double* dy, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d masked = _mm256_and_pd(keep, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), masked));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

}  // namespace

namespace detail {
const Ops avx2_ops = {
    .gemm_nn = gemm_nn,
    .gemm_nt = gemm_nt,
    .gemm_tn = gemm_tn,
    .sum = sum,
    .dot = dot,
    .axpy = axpy,
    .scale = scale,
    .mul = mul,
    .mul_acc = mul_acc,
    .vabs = vabs,
    .relu = relu,
    .relu_bwd = relu_bwd,
};
}  // namespace detail

}  // namespace panning::kernels
