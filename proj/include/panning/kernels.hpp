#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels used by the autodiff engine.
// Scalar reference implementations plus AVX2/FMA variants selected at
// runtime. Select explicitly with set_backend() or the PANNING_KERNELS
// environment variable (scalar | avx2 | auto).

namespace panning::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
void set_backend(Backend b);
bool avx2_available();
std::string backend_name(Backend b);

struct Ops {
  // C[M,N] = A[M,K] * B[K,N]; accumulate adds into C instead of overwriting.
  void (*gemm_nn)(std::size_t M, std::size_t K, std::size_t N, const double* A,
                  const double* B, double* C, bool accumulate);
  // C[M,N] = A[M,K] * B^T, B stored [N,K].
  void (*gemm_nt)(std::size_t M, std::size_t K, std::size_t N, const double* A,
                  const double* B, double* C, bool accumulate);
  // C[M,N] = A^T * B, A stored [K,M], B stored [K,N].
  void (*gemm_tn)(std::size_t M, std::size_t K, std::size_t N, const double* A,
                  const double* B, double* C, bool accumulate);
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double* y, double a, const double* x, std::size_t n);
  void (*scale)(double* x, double a, std::size_t n);
  void (*mul)(double* out, const double* a, const double* b, std::size_t n);
  void (*mul_acc)(double* out, const double* a, const double* b, std::size_t n);
  void (*vabs)(double* out, const double* x, std::size_t n);
  void (*relu)(double* out, const double* x, std::size_t n);
  // dx += dy where x > 0
  void (*relu_bwd)(double* dx, const double* x, const double* dy,
                   std::size_t n);
};

const Ops& ops();

namespace detail {
extern const Ops scalar_ops;
extern const Ops avx2_ops;
}  // namespace detail

}  // namespace panning::kernels
