#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panning/tape.hpp"
#include "panning/tensor.hpp"

namespace panning::model {

enum class Activation { None, Relu, Tanh };

struct LayerDesc {
  enum class Kind { Dense, Conv };
  Kind kind = Kind::Dense;
  int in = 0;                 // dense in-dim / conv in-channels
  int out = 0;                // dense out-dim / conv out-channels
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  Activation act = Activation::Relu;
  int pool_win = 0;           // average pooling after the layer, 0 = none
  int pool_stride = 0;

  std::size_t weight_count() const;
};

struct NetworkSpec {
  std::vector<LayerDesc> layers;
  int classes = 0;
  // Conv-input geometry; dense-only networks use layers[0].in.
  int in_c = 0, in_h = 0, in_w = 0;

  bool conv_input() const { return in_c > 0; }
  void validate() const;  // throws std::invalid_argument on bad wiring

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& j);

  // Chain of dense layers: dims = {in, h1, ..., classes}. Last layer linear.
  static NetworkSpec mlp(const std::vector<int>& dims,
                         Activation act = Activation::Relu);
  // Classic 2-conv / 3-dense LeNet5 sized for 28x28x1 inputs.
  static NetworkSpec lenet5();
};

// Flat weight vector w plus per-layer slices. Biases live in a separate
// vector and are never masked or scored.
struct Parameters {
  std::vector<double> weights;
  std::vector<double> biases;
  std::vector<std::size_t> w_off;  // layers+1 boundaries into weights
  std::vector<std::size_t> b_off;
};

// Binary keep-mask c aligned with Parameters.weights. Stored as doubles
// (0.0 / 1.0) so c .* w is a plain elementwise product.
struct Mask {
  std::vector<double> keep;

  static Mask ones(std::size_t m) { return Mask{std::vector<double>(m, 1.0)}; }
  std::size_t count_kept() const;
};

struct WeightCounts {
  std::size_t total = 0;
  std::vector<std::size_t> per_layer;
};

WeightCounts weight_counts(const NetworkSpec& spec);

// Fan-in-scaled uniform init (ReLU gain), zero biases; reproducible.
Parameters init_params(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardOptions {
  bool apply_mask = true;
  bool abs_weights = false;          // score on |w| (SynFlow linearization)
  bool identity_activations = false;
  bool zero_bias = false;
  const std::vector<double>* weight_override = nullptr;  // replaces c .* w
};

struct ForwardResult {
  int logits = -1;
  std::vector<int> weight_nodes;  // leaf id per layer, aligned with spec
  std::vector<int> bias_nodes;
};

// Builds the masked forward pass on the tape. The weight leaves hold the
// exact values the loss sees (c .* w by default), so tape gradients with
// respect to them are gradients at the masked point.
ForwardResult forward(ad::Tape& tape, const NetworkSpec& spec,
                      const Parameters& params, const Mask* mask,
                      const ad::Tensor& batch, const ForwardOptions& opt = {});

// Concatenates per-layer weight-leaf gradients into a flat vector aligned
// with Parameters.weights. Call after tape.backward().
ad::GradientVector gather_weight_grads(const ad::Tape& tape,
                                       const NetworkSpec& spec,
                                       const ForwardResult& fr);
ad::GradientVector gather_bias_grads(const ad::Tape& tape,
                                     const NetworkSpec& spec,
                                     const ForwardResult& fr);

}  // namespace panning::model
