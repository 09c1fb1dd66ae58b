#pragma once

#include <functional>
#include <vector>

#include "panning/tensor.hpp"

namespace panning::ad {

// Reverse-mode tape. Each forward op records one node; backward() walks
// the record in reverse. A tape is built per forward pass and discarded.
// Single-threaded; distinct tapes share no state.
class Tape {
 public:
  int input(Tensor value);

  int matmul(int a, int b);
  // x: [N,C,H,W], w: [O,C,kh,kw]
  int conv2d(int x, int w, int stride, int pad);
  int bias_add(int x, int b);
  int relu(int x);
  int tanh(int x);
  int mul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int abs(int x);
  int scale(int x, double c);
  int sum(int x);
  int avg_pool(int x, int win, int stride);
  int softmax_cross_entropy(int logits, std::vector<int> labels);
  int reshape(int x, std::vector<int> shape);
  int concat_cols(int a, int b);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t node_count() const { return nodes_.size(); }

  // root must be a scalar; fills per-node adjoints.
  void backward(int root);
  // Adjoint of a node after backward(); zero tensor if the node does not
  // influence the root.
  const Tensor& grad(int id) const;

 private:
  enum class Op {
    Input,
    MatMul,
    Conv2d,
    BiasAdd,
    Relu,
    Tanh,
    Mul,
    Add,
    Sub,
    Abs,
    Scale,
    Sum,
    AvgPool,
    SoftmaxXent,
    Reshape,
    ConcatCols,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor value;
    double c = 0.0;            // Scale factor
    int stride = 1, pad = 0;   // Conv2d / AvgPool geometry
    int win = 1;
    std::vector<double> aux;   // im2col columns, softmax probabilities
    std::vector<int> labels;
  };

  int push(Node n);
  Tensor& grad_mut(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Central finite-difference Hessian-vector product from a gradient
// oracle: (grad(x + eps v) - grad(x - eps v)) / (2 eps).
// eps <= 0 selects 1e-4 * (1 + max|theta|).
using GradFn = std::function<GradientVector(const GradientVector&)>;
GradientVector hvp_fd(const GradFn& grad_of_loss, const GradientVector& theta,
                      const GradientVector& v, double eps = 0.0);

}  // namespace panning::ad
