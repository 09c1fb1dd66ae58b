#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "panning/tape.hpp"

using namespace panning;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng,
                   double lo = -1.5, double hi = 1.5) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = d(rng);
  return t;
}

// Builds the graph from leaf tensors and returns the scalar root.
using Builder = std::function<int(Tape&, const std::vector<int>&)>;

// Central-difference check of every element of every leaf.
void check_gradients(const std::vector<Tensor>& leaves, const Builder& build,
                     double rel_tol = 1e-5, double eps = 1e-6) {
  Tape tape;
  std::vector<int> ids;
  for (const Tensor& t : leaves) ids.push_back(tape.input(t));
  const int root = build(tape, ids);
  REQUIRE(tape.value(root).size() == 1);
  tape.backward(root);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor& g = tape.grad(ids[li]);
    for (std::size_t i = 0; i < leaves[li].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted = leaves;
        shifted[li].data[i] += delta;
        Tape t2;
        std::vector<int> ids2;
        for (const Tensor& t : shifted) ids2.push_back(t2.input(t));
        return t2.value(build(t2, ids2)).data[0];
      };
      const double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(g.data[i])});
      CHECK(std::fabs(fd - g.data[i]) <= rel_tol * scale);
    }
  }
}

}  // namespace

TEST_CASE("gradients: matmul / bias_add / elementwise chains") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 3);
    const int k = 1 + static_cast<int>(rng() % 4);
    const int n = 1 + static_cast<int>(rng() % 3);
    const std::vector<Tensor> leaves{rand_tensor({m, k}, rng),
                                     rand_tensor({k, n}, rng),
                                     rand_tensor({n}, rng)};
    check_gradients(leaves, [](Tape& t, const std::vector<int>& in) {
      const int h = t.bias_add(t.matmul(in[0], in[1]), in[2]);
      return t.sum(t.mul(h, h));
    });
  }
}

TEST_CASE("gradients: relu / tanh / abs / scale / add / sub") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    // keep away from the relu/abs kinks so FD is valid
    Tensor a = rand_tensor({2, 3}, rng);
    Tensor b = rand_tensor({2, 3}, rng);
    for (double& v : a.data) if (std::fabs(v) < 0.05) v = 0.1;
    for (double& v : b.data) if (std::fabs(v) < 0.05) v = -0.1;
    check_gradients({a, b}, [](Tape& t, const std::vector<int>& in) {
      const int r = t.relu(in[0]);
      const int u = t.tanh(t.scale(in[1], 0.7));
      const int v = t.abs(t.sub(r, u));
      return t.sum(t.add(v, t.mul(in[0], in[1])));
    });
  }
}

TEST_CASE("gradients: conv2d with stride and padding") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    const int C = 1 + static_cast<int>(rng() % 2);
    const int O = 1 + static_cast<int>(rng() % 2);
    const int H = 4 + static_cast<int>(rng() % 3);
    const int k = 2 + static_cast<int>(rng() % 2);
    const int stride = 1 + static_cast<int>(rng() % 2);
    const int pad = static_cast<int>(rng() % 2);
    const std::vector<Tensor> leaves{rand_tensor({2, C, H, H}, rng),
                                     rand_tensor({O, C, k, k}, rng)};
    check_gradients(leaves, [stride, pad](Tape& t, const std::vector<int>& in) {
      const int y = t.conv2d(in[0], in[1], stride, pad);
      return t.sum(t.mul(y, y));
    });
  }
}

TEST_CASE("gradients: avg_pool and reshape") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 15; ++trial) {
    const std::vector<Tensor> leaves{rand_tensor({2, 2, 4, 4}, rng)};
    check_gradients(leaves, [](Tape& t, const std::vector<int>& in) {
      const int p = t.avg_pool(in[0], 2, 2);
      const int flat = t.reshape(p, {2, 8});
      return t.sum(t.mul(flat, flat));
    });
  }
}

TEST_CASE("gradients: softmax cross entropy") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int c = 2 + static_cast<int>(rng() % 4);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& l : labels) l = static_cast<int>(rng() % static_cast<unsigned>(c));
    const std::vector<Tensor> leaves{rand_tensor({n, c}, rng, -3.0, 3.0)};
    check_gradients(leaves, [labels](Tape& t, const std::vector<int>& in) {
      return t.softmax_cross_entropy(in[0], labels);
    });
  }
}

TEST_CASE("gradients: concat_cols routes adjoints to both halves") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 15; ++trial) {
    const std::vector<Tensor> leaves{rand_tensor({3, 2}, rng),
                                     rand_tensor({3, 4}, rng),
                                     rand_tensor({6, 2}, rng)};
    check_gradients(leaves, [](Tape& t, const std::vector<int>& in) {
      const int cat = t.concat_cols(in[0], in[1]);
      return t.sum(t.mul(t.matmul(cat, in[2]), t.matmul(cat, in[2])));
    });
  }
}

TEST_CASE("softmax cross entropy matches closed form on two logits") {
  // loss = log(1 + exp(b - a)) for label 0
  Tape t;
  const int x = t.input(Tensor({1, 2}, {0.3, -0.9}));
  const int loss = t.softmax_cross_entropy(x, {0});
  CHECK(t.value(loss).data[0] ==
        doctest::Approx(std::log(1.0 + std::exp(-0.9 - 0.3))).epsilon(1e-12));
}

TEST_CASE("grad of unreached node is zero") {
  Tape t;
  const int a = t.input(Tensor::scalar(2.0));
  const int b = t.input(Tensor::scalar(3.0));
  const int root = t.sum(t.mul(a, a));
  t.backward(root);
  CHECK(t.grad(b).data[0] == 0.0);
  CHECK(t.grad(a).data[0] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  const int a = t.input(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}

TEST_CASE("shape mismatch raises invalid_argument naming the op") {
  Tape t;
  const int a = t.input(Tensor({2, 3}));
  const int b = t.input(Tensor({2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
  const int c = t.input(Tensor({3, 2}));
  CHECK_THROWS_AS(t.add(a, c), std::invalid_argument);
}

TEST_CASE("identical tapes produce bitwise identical gradients") {
  std::mt19937_64 rng(7);
  const Tensor x = rand_tensor({3, 5}, rng);
  const Tensor w = rand_tensor({5, 4}, rng);
  auto run = [&]() {
    Tape t;
    const int xi = t.input(x);
    const int wi = t.input(w);
    const int root = t.sum(t.tanh(t.matmul(xi, wi)));
    t.backward(root);
    return t.grad(wi).data;
  };
  CHECK(run() == run());
}

TEST_CASE("hvp_fd matches analytic H v on random quadratics up to dim 50") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    // symmetric H = B + B^T
    std::vector<double> H(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) H[i * n + j] = H[j * n + i] = d(rng);
    ad::GradFn grad = [&H, n](const ad::GradientVector& x) {
      ad::GradientVector g(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i] += H[i * n + j] * x[j];
      return g;
    };
    ad::GradientVector theta(n), v(n);
    for (double& t : theta) t = d(rng);
    for (double& t : v) t = d(rng);
    const ad::GradientVector hv = ad::hvp_fd(grad, theta, v);
    for (std::size_t i = 0; i < n; ++i) {
      double want = 0.0;
      for (std::size_t j = 0; j < n; ++j) want += H[i * n + j] * v[j];
      CHECK(std::fabs(hv[i] - want) <= 1e-8);
    }
  }
}

TEST_CASE("hvp_fd on diag(1,2) quadratic gives exactly Hv") {
  // L = x1^2/2 + x2^2 -> H = diag(1, 2)
  ad::GradFn grad = [](const ad::GradientVector& x) {
    return ad::GradientVector{x[0], 2.0 * x[1]};
  };
  const ad::GradientVector hv = ad::hvp_fd(grad, {0.3, -0.7}, {1.0, 1.0});
  CHECK(hv[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(hv[1] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("hvp_fd rejects non-finite gradients with the perturbation sign") {
  ad::GradFn grad = [](const ad::GradientVector& x) {
    return ad::GradientVector{x[0] > 0 ? std::nan("") : x[0]};
  };
  CHECK_THROWS_AS(ad::hvp_fd(grad, {0.0}, {1.0}), std::runtime_error);
}

TEST_CASE("all-positive network with ones input has strictly positive grads") {
  // needed by SynFlow: connected path => positive saliency gradient
  std::mt19937_64 rng(9);
  const Tensor w1 = rand_tensor({4, 5}, rng, 0.01, 1.0);
  const Tensor w2 = rand_tensor({5, 3}, rng, 0.01, 1.0);
  Tape t;
  const int x = t.input(Tensor({1, 4}, std::vector<double>(4, 1.0)));
  const int a = t.input(w1);
  const int b = t.input(w2);
  const int root = t.sum(t.matmul(t.matmul(x, a), b));
  t.backward(root);
  for (double g : t.grad(a).data) CHECK(g > 0.0);
  for (double g : t.grad(b).data) CHECK(g > 0.0);
}
