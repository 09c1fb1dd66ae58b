#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "panning/kernels.hpp"

using namespace panning::kernels;

namespace {

std::vector<double> randvec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::fabs(a[i]));
    CHECK(std::fabs(a[i] - b[i]) <= tol * scale);
  }
}

}  // namespace

TEST_CASE("scalar gemm_nn matches hand example") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8};
  std::vector<double> C(4, -1.0);
  detail::scalar_ops.gemm_nn(2, 2, 2, A.data(), B.data(), C.data(), false);
  check_close(C, {19, 22, 43, 50});
  detail::scalar_ops.gemm_nn(2, 2, 2, A.data(), B.data(), C.data(), true);
  check_close(C, {38, 44, 86, 100});
}

TEST_CASE("gemm_nt and gemm_tn agree with gemm_nn on transposed operands") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = 1 + rng() % 9, K = 1 + rng() % 9, N = 1 + rng() % 9;
    const auto A = randvec(M * K, rng);
    const auto B = randvec(K * N, rng);
    std::vector<double> ref(M * N);
    detail::scalar_ops.gemm_nn(M, K, N, A.data(), B.data(), ref.data(), false);

    std::vector<double> Bt(N * K);  // [N,K]
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t n = 0; n < N; ++n) Bt[n * K + k] = B[k * N + n];
    std::vector<double> C(M * N, 0.0);
    detail::scalar_ops.gemm_nt(M, K, N, A.data(), Bt.data(), C.data(), false);
    check_close(C, ref);

    std::vector<double> At(K * M);  // [K,M]
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t k = 0; k < K; ++k) At[k * M + m] = A[m * K + k];
    std::fill(C.begin(), C.end(), 0.0);
    detail::scalar_ops.gemm_tn(M, K, N, At.data(), B.data(), C.data(), false);
    check_close(C, ref);
  }
}

TEST_CASE("avx2 kernels match scalar within tolerance") {
  if (!avx2_available()) return;  // stub aliases scalar elsewhere
  std::mt19937_64 rng(42);
  const Ops& s = detail::scalar_ops;
  const Ops& v = detail::avx2_ops;

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t M = 1 + rng() % 17, K = 1 + rng() % 33, N = 1 + rng() % 17;
    const auto A = randvec(M * K, rng);
    const auto B = randvec(K * N, rng);
    const auto Bt = randvec(N * K, rng);
    const auto At = randvec(K * M, rng);
    std::vector<double> c1(M * N, 0.5), c2(M * N, 0.5);

    for (bool acc : {false, true}) {
      s.gemm_nn(M, K, N, A.data(), B.data(), c1.data(), acc);
      v.gemm_nn(M, K, N, A.data(), B.data(), c2.data(), acc);
      check_close(c1, c2, 1e-11);
      s.gemm_nt(M, K, N, A.data(), Bt.data(), c1.data(), acc);
      v.gemm_nt(M, K, N, A.data(), Bt.data(), c2.data(), acc);
      check_close(c1, c2, 1e-11);
      s.gemm_tn(M, K, N, At.data(), B.data(), c1.data(), acc);
      v.gemm_tn(M, K, N, At.data(), B.data(), c2.data(), acc);
      check_close(c1, c2, 1e-11);
    }

    const std::size_t n = 1 + rng() % 200;
    const auto x = randvec(n, rng);
    const auto y = randvec(n, rng);
    CHECK(std::fabs(s.sum(x.data(), n) - v.sum(x.data(), n)) < 1e-10);
    CHECK(std::fabs(s.dot(x.data(), y.data(), n) - v.dot(x.data(), y.data(), n)) < 1e-10);

    std::vector<double> o1(n), o2(n);
    s.mul(o1.data(), x.data(), y.data(), n);
    v.mul(o2.data(), x.data(), y.data(), n);
    check_close(o1, o2);
    s.mul_acc(o1.data(), x.data(), y.data(), n);
    v.mul_acc(o2.data(), x.data(), y.data(), n);
    check_close(o1, o2);
    s.vabs(o1.data(), x.data(), n);
    v.vabs(o2.data(), x.data(), n);
    check_close(o1, o2);
    s.relu(o1.data(), x.data(), n);
    v.relu(o2.data(), x.data(), n);
    check_close(o1, o2);

    auto d1 = randvec(n, rng);
    auto d2 = d1;
    s.relu_bwd(d1.data(), x.data(), y.data(), n);
    v.relu_bwd(d2.data(), x.data(), y.data(), n);
    check_close(d1, d2);

    auto y1 = y, y2 = y;
    s.axpy(y1.data(), 1.7, x.data(), n);
    v.axpy(y2.data(), 1.7, x.data(), n);
    check_close(y1, y2);
    s.scale(y1.data(), -0.3, n);
    v.scale(y2.data(), -0.3, n);
    check_close(y1, y2);
  }
}

TEST_CASE("backend selection is explicit and queryable") {
  const Backend before = active_backend();
  set_backend(Backend::Scalar);
  CHECK(active_backend() == Backend::Scalar);
  CHECK(backend_name(Backend::Scalar) == "scalar");
  CHECK(backend_name(Backend::Avx2) == "avx2");
  set_backend(before);
}

TEST_CASE("relu_bwd accumulates only where input positive") {
  const std::vector<double> x{-1.0, 0.0, 2.0};
  const std::vector<double> dy{5.0, 5.0, 5.0};
  std::vector<double> dx{1.0, 1.0, 1.0};
  detail::scalar_ops.relu_bwd(dx.data(), x.data(), dy.data(), 3);
  CHECK(dx[0] == 1.0);
  CHECK(dx[1] == 1.0);
  CHECK(dx[2] == 6.0);
}
