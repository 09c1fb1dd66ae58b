#include "panning/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "panning/kernels.hpp"

namespace panning::ad {

namespace {

[[noreturn]] void shape_error(const std::string& primitive, const std::string& detail) {
  throw std::invalid_argument(primitive + ": " + detail);
}

void check_same_shape(const char* prim, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    shape_error(prim, "operand shapes differ " + a.shape_str() + " vs " + b.shape_str());
}

// cols: [OH*OW, C*kh*kw] for one sample.
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW, double* cols) {
  const int CKK = C * kh * kw;
  for (int oh = 0; oh < OH; ++oh) {
    for (int ow = 0; ow < OW; ++ow) {
      double* row = cols + (oh * OW + ow) * CKK;
      for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
          const int h = oh * stride - pad + i;
          for (int j = 0; j < kw; ++j) {
            const int w = ow * stride - pad + j;
            row[(c * kh + i) * kw + j] =
                (h >= 0 && h < H && w >= 0 && w < W) ? x[(c * H + h) * W + w] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_acc(const double* cols, int C, int H, int W, int kh, int kw,
                int stride, int pad, int OH, int OW, double* dx) {
  const int CKK = C * kh * kw;
  for (int oh = 0; oh < OH; ++oh) {
    for (int ow = 0; ow < OW; ++ow) {
      const double* row = cols + (oh * OW + ow) * CKK;
      for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
          const int h = oh * stride - pad + i;
          if (h < 0 || h >= H) continue;
          for (int j = 0; j < kw; ++j) {
            const int w = ow * stride - pad + j;
            if (w < 0 || w >= W) continue;
            dx[(c * H + h) * W + w] += row[(c * kh + i) * kw + j];
          }
        }
      }
    }
  }
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.ndim() != 2 || B.ndim() != 2)
    shape_error("matmul", "expects 2-d operands, got " + A.shape_str() + " and " + B.shape_str());
  if (A.dim(1) != B.dim(0))
    shape_error("matmul", "inner dims mismatch " + A.shape_str() + " x " + B.shape_str());
  const std::size_t M = static_cast<std::size_t>(A.dim(0));
  const std::size_t K = static_cast<std::size_t>(A.dim(1));
  const std::size_t N = static_cast<std::size_t>(B.dim(1));
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  n.value = Tensor({A.dim(0), B.dim(1)});
  kernels::ops().gemm_nn(M, K, N, A.data.data(), B.data.data(), n.value.data.data(), false);
  return push(std::move(n));
}

int Tape::conv2d(int x, int w, int stride, int pad) {
  const Tensor& X = value(x);
  const Tensor& Wt = value(w);
  if (X.ndim() != 4 || Wt.ndim() != 4)
    shape_error("conv2d", "expects 4-d operands, got " + X.shape_str() + " and " + Wt.shape_str());
  if (X.dim(1) != Wt.dim(1))
    shape_error("conv2d", "channel mismatch input " + X.shape_str() + " kernel " + Wt.shape_str());
  const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const int O = Wt.dim(0), kh = Wt.dim(2), kw = Wt.dim(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0)
    shape_error("conv2d", "kernel " + Wt.shape_str() + " does not fit input " + X.shape_str());
  const int CKK = C * kh * kw;
  const int OHW = OH * OW;
  Node n;
  n.op = Op::Conv2d;
  n.a = x;
  n.b = w;
  n.stride = stride;
  n.pad = pad;
  n.value = Tensor({N, O, OH, OW});
  n.aux.assign(static_cast<std::size_t>(N) * OHW * CKK, 0.0);
  for (int s = 0; s < N; ++s) {
    double* cols = n.aux.data() + static_cast<std::size_t>(s) * OHW * CKK;
    im2col(X.data.data() + static_cast<std::size_t>(s) * C * H * W, C, H, W, kh,
           kw, stride, pad, OH, OW, cols);
    kernels::ops().gemm_nt(static_cast<std::size_t>(O), static_cast<std::size_t>(CKK),
                           static_cast<std::size_t>(OHW), Wt.data.data(), cols,
                           n.value.data.data() + static_cast<std::size_t>(s) * O * OHW,
                           false);
  }
  return push(std::move(n));
}

int Tape::bias_add(int x, int b) {
  const Tensor& X = value(x);
  const Tensor& B = value(b);
  Node n;
  n.op = Op::BiasAdd;
  n.a = x;
  n.b = b;
  n.value = X;
  if (X.ndim() == 2 && B.ndim() == 1 && B.dim(0) == X.dim(1)) {
    const int M = X.dim(0), N = X.dim(1);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) n.value.data[static_cast<std::size_t>(i) * N + j] += B.data[static_cast<std::size_t>(j)];
  } else if (X.ndim() == 4 && B.ndim() == 1 && B.dim(0) == X.dim(1)) {
    const int N = X.dim(0), C = X.dim(1);
    const int HW = X.dim(2) * X.dim(3);
    for (int s = 0; s < N; ++s)
      for (int c = 0; c < C; ++c) {
        double* p = n.value.data.data() + (static_cast<std::size_t>(s) * C + c) * HW;
        const double bv = B.data[static_cast<std::size_t>(c)];
        for (int i = 0; i < HW; ++i) p[i] += bv;
      }
  } else {
    shape_error("bias_add", "bias " + B.shape_str() + " does not broadcast over " + X.shape_str());
  }
  return push(std::move(n));
}

int Tape::relu(int x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.value = Tensor(X.shape);
  kernels::ops().relu(n.value.data.data(), X.data.data(), X.size());
  return push(std::move(n));
}

int Tape::tanh(int x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::Tanh;
  n.a = x;
  n.value = Tensor(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) n.value.data[i] = std::tanh(X.data[i]);
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape("mul", A, B);
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.value = Tensor(A.shape);
  kernels::ops().mul(n.value.data.data(), A.data.data(), B.data.data(), A.size());
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape("add", A, B);
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.value = A;
  kernels::ops().axpy(n.value.data.data(), 1.0, B.data.data(), B.size());
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape("sub", A, B);
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.value = A;
  kernels::ops().axpy(n.value.data.data(), -1.0, B.data.data(), B.size());
  return push(std::move(n));
}

int Tape::abs(int x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::Abs;
  n.a = x;
  n.value = Tensor(X.shape);
  kernels::ops().vabs(n.value.data.data(), X.data.data(), X.size());
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::Scale;
  n.a = x;
  n.c = c;
  n.value = X;
  kernels::ops().scale(n.value.data.data(), c, n.value.size());
  return push(std::move(n));
}

int Tape::sum(int x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::Sum;
  n.a = x;
  n.value = Tensor::scalar(kernels::ops().sum(X.data.data(), X.size()));
  return push(std::move(n));
}

int Tape::avg_pool(int x, int win, int stride) {
  const Tensor& X = value(x);
  if (X.ndim() != 4) shape_error("avg_pool", "expects 4-d input, got " + X.shape_str());
  const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const int OH = (H - win) / stride + 1;
  const int OW = (W - win) / stride + 1;
  if (OH <= 0 || OW <= 0)
    shape_error("avg_pool", "window does not fit input " + X.shape_str());
  Node n;
  n.op = Op::AvgPool;
  n.a = x;
  n.win = win;
  n.stride = stride;
  n.value = Tensor({N, C, OH, OW});
  const double inv = 1.0 / (win * win);
  for (int s = 0; s < N; ++s)
    for (int c = 0; c < C; ++c) {
      const double* xp = X.data.data() + (static_cast<std::size_t>(s) * C + c) * H * W;
      double* yp = n.value.data.data() + (static_cast<std::size_t>(s) * C + c) * OH * OW;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j)
              acc += xp[(oh * stride + i) * W + ow * stride + j];
          yp[oh * OW + ow] = acc * inv;
        }
    }
  return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, std::vector<int> labels) {
  const Tensor& X = value(logits);
  if (X.ndim() != 2)
    shape_error("softmax_cross_entropy", "expects 2-d logits, got " + X.shape_str());
  const int B = X.dim(0), L = X.dim(1);
  if (static_cast<int>(labels.size()) != B)
    shape_error("softmax_cross_entropy",
                "label count " + std::to_string(labels.size()) + " vs batch " + std::to_string(B));
  for (int i = 0; i < B; ++i)
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= L)
      shape_error("softmax_cross_entropy", "label out of range at row " + std::to_string(i));
  Node n;
  n.op = Op::SoftmaxXent;
  n.a = logits;
  n.labels = std::move(labels);
  n.aux.resize(X.size());
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    const double* row = X.data.data() + static_cast<std::size_t>(i) * L;
    double mx = row[0];
    for (int j = 1; j < L; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < L; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    double* p = n.aux.data() + static_cast<std::size_t>(i) * L;
    for (int j = 0; j < L; ++j) p[j] = std::exp(row[j] - logz);
    loss += logz - row[n.labels[static_cast<std::size_t>(i)]];
  }
  n.value = Tensor::scalar(loss / B);
  return push(std::move(n));
}

int Tape::reshape(int x, std::vector<int> shape) {
  const Tensor& X = value(x);
  if (Tensor::count(shape) != X.size())
    shape_error("reshape", "element count mismatch " + X.shape_str());
  Node n;
  n.op = Op::Reshape;
  n.a = x;
  n.value = Tensor(std::move(shape), X.data);
  return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.ndim() != 2 || B.ndim() != 2 || A.dim(0) != B.dim(0))
    shape_error("concat_cols", "row mismatch " + A.shape_str() + " vs " + B.shape_str());
  const int M = A.dim(0), Na = A.dim(1), Nb = B.dim(1);
  Node n;
  n.op = Op::ConcatCols;
  n.a = a;
  n.b = b;
  n.value = Tensor({M, Na + Nb});
  for (int i = 0; i < M; ++i) {
    double* out = n.value.data.data() + static_cast<std::size_t>(i) * (Na + Nb);
    std::copy_n(A.data.data() + static_cast<std::size_t>(i) * Na, Na, out);
    std::copy_n(B.data.data() + static_cast<std::size_t>(i) * Nb, Nb, out + Na);
  }
  return push(std::move(n));
}

Tensor& Tape::grad_mut(int id) { return grads_[static_cast<std::size_t>(id)]; }

const Tensor& Tape::grad(int id) const {
  if (grads_.empty()) throw std::logic_error("grad() before backward()");
  return grads_[static_cast<std::size_t>(id)];
}

void Tape::backward(int root) {
  const Tensor& r = value(root);
  if (r.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + r.shape_str());
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.emplace_back(n.value.shape);
  grad_mut(root).data[0] = 1.0;
  for (int id = root; id >= 0; --id) backward_node(id);
}

void Tape::backward_node(int id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = grads_[static_cast<std::size_t>(id)];
  const auto& k = kernels::ops();
  switch (n.op) {
    case Op::Input:
      break;
    case Op::MatMul: {
      const Tensor& A = value(n.a);
      const Tensor& B = value(n.b);
      const std::size_t M = static_cast<std::size_t>(A.dim(0));
      const std::size_t K = static_cast<std::size_t>(A.dim(1));
      const std::size_t N = static_cast<std::size_t>(B.dim(1));
      k.gemm_nt(M, N, K, g.data.data(), B.data.data(), grad_mut(n.a).data.data(), true);
      k.gemm_tn(K, M, N, A.data.data(), g.data.data(), grad_mut(n.b).data.data(), true);
      break;
    }
    case Op::Conv2d: {
      const Tensor& X = value(n.a);
      const Tensor& Wt = value(n.b);
      const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
      const int O = Wt.dim(0), kh = Wt.dim(2), kw = Wt.dim(3);
      const int OH = n.value.dim(2), OW = n.value.dim(3);
      const int CKK = C * kh * kw;
      const int OHW = OH * OW;
      Tensor& dX = grad_mut(n.a);
      Tensor& dW = grad_mut(n.b);
      std::vector<double> dcols(static_cast<std::size_t>(OHW) * CKK);
      for (int s = 0; s < N; ++s) {
        const double* cols = n.aux.data() + static_cast<std::size_t>(s) * OHW * CKK;
        const double* dy = g.data.data() + static_cast<std::size_t>(s) * O * OHW;
        k.gemm_nn(static_cast<std::size_t>(O), static_cast<std::size_t>(OHW),
                  static_cast<std::size_t>(CKK), dy, cols, dW.data.data(), true);
        k.gemm_tn(static_cast<std::size_t>(OHW), static_cast<std::size_t>(O),
                  static_cast<std::size_t>(CKK), dy, Wt.data.data(), dcols.data(), false);
        col2im_acc(dcols.data(), C, H, W, kh, kw, n.stride, n.pad, OH, OW,
                   dX.data.data() + static_cast<std::size_t>(s) * C * H * W);
      }
      break;
    }
    case Op::BiasAdd: {
      const Tensor& X = value(n.a);
      Tensor& dX = grad_mut(n.a);
      Tensor& dB = grad_mut(n.b);
      k.axpy(dX.data.data(), 1.0, g.data.data(), g.size());
      if (X.ndim() == 2) {
        const int M = X.dim(0), N = X.dim(1);
        for (int i = 0; i < M; ++i)
          for (int j = 0; j < N; ++j)
            dB.data[static_cast<std::size_t>(j)] += g.data[static_cast<std::size_t>(i) * N + j];
      } else {
        const int S = X.dim(0), C = X.dim(1);
        const int HW = X.dim(2) * X.dim(3);
        for (int s = 0; s < S; ++s)
          for (int c = 0; c < C; ++c)
            dB.data[static_cast<std::size_t>(c)] +=
                k.sum(g.data.data() + (static_cast<std::size_t>(s) * C + c) * HW,
                      static_cast<std::size_t>(HW));
      }
      break;
    }
    case Op::Relu:
      k.relu_bwd(grad_mut(n.a).data.data(), value(n.a).data.data(), g.data.data(), g.size());
      break;
    case Op::Tanh: {
      Tensor& dX = grad_mut(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        dX.data[i] += g.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
      break;
    }
    case Op::Mul:
      k.mul_acc(grad_mut(n.a).data.data(), g.data.data(), value(n.b).data.data(), g.size());
      k.mul_acc(grad_mut(n.b).data.data(), g.data.data(), value(n.a).data.data(), g.size());
      break;
    case Op::Add:
      k.axpy(grad_mut(n.a).data.data(), 1.0, g.data.data(), g.size());
      k.axpy(grad_mut(n.b).data.data(), 1.0, g.data.data(), g.size());
      break;
    case Op::Sub:
      k.axpy(grad_mut(n.a).data.data(), 1.0, g.data.data(), g.size());
      k.axpy(grad_mut(n.b).data.data(), -1.0, g.data.data(), g.size());
      break;
    case Op::Abs: {
      const Tensor& X = value(n.a);
      Tensor& dX = grad_mut(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (X.data[i] > 0.0)
          dX.data[i] += g.data[i];
        else if (X.data[i] < 0.0)
          dX.data[i] -= g.data[i];
      }
      break;
    }
    case Op::Scale:
      k.axpy(grad_mut(n.a).data.data(), n.c, g.data.data(), g.size());
      break;
    case Op::Sum: {
      Tensor& dX = grad_mut(n.a);
      const double gv = g.data[0];
      for (std::size_t i = 0; i < dX.size(); ++i) dX.data[i] += gv;
      break;
    }
    case Op::AvgPool: {
      const Tensor& X = value(n.a);
      const int S = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
      const int OH = n.value.dim(2), OW = n.value.dim(3);
      const double inv = 1.0 / (n.win * n.win);
      Tensor& dX = grad_mut(n.a);
      for (int s = 0; s < S; ++s)
        for (int c = 0; c < C; ++c) {
          double* dxp = dX.data.data() + (static_cast<std::size_t>(s) * C + c) * H * W;
          const double* gp = g.data.data() + (static_cast<std::size_t>(s) * C + c) * OH * OW;
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              const double gv = gp[oh * OW + ow] * inv;
              for (int i = 0; i < n.win; ++i)
                for (int j = 0; j < n.win; ++j)
                  dxp[(oh * n.stride + i) * W + ow * n.stride + j] += gv;
            }
        }
      break;
    }
    case Op::SoftmaxXent: {
      const Tensor& X = value(n.a);
      const int B = X.dim(0), L = X.dim(1);
      const double gv = g.data[0] / B;
      Tensor& dX = grad_mut(n.a);
      for (int i = 0; i < B; ++i) {
        const double* p = n.aux.data() + static_cast<std::size_t>(i) * L;
        double* d = dX.data.data() + static_cast<std::size_t>(i) * L;
        for (int j = 0; j < L; ++j) d[j] += gv * p[j];
        d[n.labels[static_cast<std::size_t>(i)]] -= gv;
      }
      break;
    }
    case Op::Reshape:
      k.axpy(grad_mut(n.a).data.data(), 1.0, g.data.data(), g.size());
      break;
    case Op::ConcatCols: {
      const Tensor& A = value(n.a);
      const Tensor& B = value(n.b);
      const int M = A.dim(0), Na = A.dim(1), Nb = B.dim(1);
      Tensor& dA = grad_mut(n.a);
      Tensor& dB = grad_mut(n.b);
      for (int i = 0; i < M; ++i) {
        const double* gr = g.data.data() + static_cast<std::size_t>(i) * (Na + Nb);
        for (int j = 0; j < Na; ++j) dA.data[static_cast<std::size_t>(i) * Na + j] += gr[j];
        for (int j = 0; j < Nb; ++j) dB.data[static_cast<std::size_t>(i) * Nb + j] += gr[Na + j];
      }
      break;
    }
  }
}

GradientVector hvp_fd(const GradFn& grad_of_loss, const GradientVector& theta,
                      const GradientVector& v, double eps) {
  if (eps <= 0.0) {
    double mx = 0.0;
    for (double t : theta) mx = std::max(mx, std::fabs(t));
    eps = 1e-4 * (1.0 + mx);
  }
  GradientVector plus = theta, minus = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += eps * v[i];
    minus[i] -= eps * v[i];
  }
  GradientVector gp = grad_of_loss(plus);
  for (double x : gp)
    if (!std::isfinite(x))
      throw std::runtime_error("hvp_fd: non-finite gradient at +eps perturbation");
  GradientVector gm = grad_of_loss(minus);
  for (double x : gm)
    if (!std::isfinite(x))
      throw std::runtime_error("hvp_fd: non-finite gradient at -eps perturbation");
  GradientVector out(theta.size());
  const double inv = 1.0 / (2.0 * eps);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) * inv;
  return out;
}

}  // namespace panning::ad
