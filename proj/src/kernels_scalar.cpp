#include "panning/kernels.hpp"

#include <cmath>
#include <cstring>

namespace panning::kernels {
namespace {

void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double a = A[i * K + k];
      if (a == 0.0) continue;
      const double* b = B + k * N;
      double* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      const double* a = A + i * K;
      const double* b = B + j * K;
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      double* c = C + i * N + j;
      *c = accumulate ? *c + acc : acc;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t l = 0; l < K; ++l) {
    const double* b = B + l * N;
    for (std::size_t i = 0; i < M; ++i) {
      const double a = A[l * M + i];
      if (a == 0.0) continue;
      double* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(double* x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void mul(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void vabs(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(x[i]);
}

void relu(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(double* dx, const double* x, const double* dy, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

}  // namespace

namespace detail {
const Ops scalar_ops = {
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
