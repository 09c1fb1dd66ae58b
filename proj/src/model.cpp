#include "panning/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "panning/rng.hpp"

namespace panning::model {

using nlohmann::json;

std::size_t LayerDesc::weight_count() const {
  if (kind == Kind::Dense) return static_cast<std::size_t>(in) * out;
  return static_cast<std::size_t>(out) * in * kernel * kernel;
}

namespace {

struct ShapeState {
  bool spatial = false;
  int c = 0, h = 0, w = 0;  // spatial
  int dim = 0;              // flat
  int flat() const { return spatial ? c * h * w : dim; }
};

ShapeState walk_layer(const LayerDesc& l, ShapeState s, std::size_t idx) {
  const std::string where = "layer " + std::to_string(idx);
  if (l.kind == LayerDesc::Kind::Conv) {
    if (!s.spatial)
      throw std::invalid_argument(where + ": conv after flattened input");
    if (s.c != l.in)
      throw std::invalid_argument(where + ": expects " + std::to_string(l.in) +
                                  " channels, got " + std::to_string(s.c));
    const int oh = (s.h + 2 * l.pad - l.kernel) / l.stride + 1;
    const int ow = (s.w + 2 * l.pad - l.kernel) / l.stride + 1;
    if (oh <= 0 || ow <= 0)
      throw std::invalid_argument(where + ": kernel does not fit input");
    s.c = l.out;
    s.h = oh;
    s.w = ow;
    if (l.pool_win > 0) {
      s.h = (s.h - l.pool_win) / l.pool_stride + 1;
      s.w = (s.w - l.pool_win) / l.pool_stride + 1;
      if (s.h <= 0 || s.w <= 0)
        throw std::invalid_argument(where + ": pool does not fit feature map");
    }
  } else {
    const int flat = s.flat();
    if (flat != l.in)
      throw std::invalid_argument(where + ": expects input dim " +
                                  std::to_string(l.in) + ", got " +
                                  std::to_string(flat));
    s.spatial = false;
    s.dim = l.out;
  }
  return s;
}

ShapeState input_state(const NetworkSpec& spec) {
  ShapeState s;
  if (spec.conv_input()) {
    s.spatial = true;
    s.c = spec.in_c;
    s.h = spec.in_h;
    s.w = spec.in_w;
  } else {
    s.dim = spec.layers.empty() ? 0 : spec.layers.front().in;
  }
  return s;
}

const char* act_name(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "none";
}

Activation act_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  return Activation::None;
}

}  // namespace

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("spec: no trainable layers");
  ShapeState s = input_state(*this);
  for (std::size_t i = 0; i < layers.size(); ++i) s = walk_layer(layers[i], s, i);
  if (s.flat() != classes)
    throw std::invalid_argument("spec: final layer emits " +
                                std::to_string(s.flat()) + " values, expected " +
                                std::to_string(classes) + " classes");
}

std::string NetworkSpec::to_json() const {
  json j;
  j["classes"] = classes;
  j["in_c"] = in_c;
  j["in_h"] = in_h;
  j["in_w"] = in_w;
  j["layers"] = json::array();
  for (const LayerDesc& l : layers) {
    json jl;
    jl["kind"] = l.kind == LayerDesc::Kind::Dense ? "dense" : "conv";
    jl["in"] = l.in;
    jl["out"] = l.out;
    jl["kernel"] = l.kernel;
    jl["stride"] = l.stride;
    jl["pad"] = l.pad;
    jl["act"] = act_name(l.act);
    jl["pool_win"] = l.pool_win;
    jl["pool_stride"] = l.pool_stride;
    j["layers"].push_back(jl);
  }
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkSpec s;
  s.classes = j.at("classes");
  s.in_c = j.at("in_c");
  s.in_h = j.at("in_h");
  s.in_w = j.at("in_w");
  for (const json& jl : j.at("layers")) {
    LayerDesc l;
    l.kind = jl.at("kind") == "conv" ? LayerDesc::Kind::Conv : LayerDesc::Kind::Dense;
    l.in = jl.at("in");
    l.out = jl.at("out");
    l.kernel = jl.at("kernel");
    l.stride = jl.at("stride");
    l.pad = jl.at("pad");
    l.act = act_from_name(jl.at("act"));
    l.pool_win = jl.at("pool_win");
    l.pool_stride = jl.at("pool_stride");
    s.layers.push_back(l);
  }
  return s;
}

NetworkSpec NetworkSpec::mlp(const std::vector<int>& dims, Activation act) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least 2 dims");
  NetworkSpec s;
  s.classes = dims.back();
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    LayerDesc l;
    l.kind = LayerDesc::Kind::Dense;
    l.in = dims[i];
    l.out = dims[i + 1];
    l.act = (i + 2 < dims.size()) ? act : Activation::None;
    s.layers.push_back(l);
  }
  return s;
}

NetworkSpec NetworkSpec::lenet5() {
  NetworkSpec s;
  s.classes = 10;
  s.in_c = 1;
  s.in_h = 28;
  s.in_w = 28;
  LayerDesc c1;
  c1.kind = LayerDesc::Kind::Conv;
  c1.in = 1;
  c1.out = 6;
  c1.kernel = 5;
  c1.pad = 2;
  c1.act = Activation::Relu;
  c1.pool_win = 2;
  c1.pool_stride = 2;
  LayerDesc c2 = c1;
  c2.in = 6;
  c2.out = 16;
  c2.pad = 0;
  LayerDesc d1;
  d1.in = 400;
  d1.out = 120;
  d1.act = Activation::Relu;
  LayerDesc d2;
  d2.in = 120;
  d2.out = 84;
  d2.act = Activation::Relu;
  LayerDesc d3;
  d3.in = 84;
  d3.out = 10;
  d3.act = Activation::None;
  s.layers = {c1, c2, d1, d2, d3};
  return s;
}

std::size_t Mask::count_kept() const {
  std::size_t n = 0;
  for (double v : keep) n += v != 0.0;
  return n;
}

WeightCounts weight_counts(const NetworkSpec& spec) {
  WeightCounts wc;
  for (const LayerDesc& l : spec.layers) {
    wc.per_layer.push_back(l.weight_count());
    wc.total += wc.per_layer.back();
  }
  return wc;
}

Parameters init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Parameters p;
  p.w_off.push_back(0);
  p.b_off.push_back(0);
  std::mt19937_64 rng = make_rng(seed, /*stream=*/0x1417);
  for (const LayerDesc& l : spec.layers) {
    const std::size_t wc = l.weight_count();
    const std::size_t fan_in = l.kind == LayerDesc::Kind::Dense
                                   ? static_cast<std::size_t>(l.in)
                                   : static_cast<std::size_t>(l.in) * l.kernel * l.kernel;
    // ReLU-gain Kaiming uniform: variance 2 / fan_in.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < wc; ++i) p.weights.push_back(dist(rng));
    for (int i = 0; i < l.out; ++i) p.biases.push_back(0.0);
    p.w_off.push_back(p.weights.size());
    p.b_off.push_back(p.biases.size());
  }
  return p;
}

ForwardResult forward(ad::Tape& tape, const NetworkSpec& spec,
                      const Parameters& params, const Mask* mask,
                      const ad::Tensor& batch, const ForwardOptions& opt) {
  ForwardResult fr;
  ShapeState st = input_state(spec);
  if (spec.conv_input()) {
    if (batch.ndim() != 4 || batch.dim(1) != spec.in_c ||
        batch.dim(2) != spec.in_h || batch.dim(3) != spec.in_w)
      throw std::invalid_argument("forward: batch shape " + batch.shape_str() +
                                  " does not match spec input");
  } else {
    if (batch.ndim() != 2 || batch.dim(1) != spec.layers.front().in)
      throw std::invalid_argument("forward: batch shape " + batch.shape_str() +
                                  " does not match spec input");
  }
  int x = tape.input(batch);
  bool flat = !spec.conv_input();
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& l = spec.layers[li];
    const std::size_t off = params.w_off[li];
    const std::size_t wc = params.w_off[li + 1] - off;

    std::vector<double> wv(wc);
    if (opt.weight_override) {
      std::copy_n(opt.weight_override->data() + off, wc, wv.data());
    } else {
      std::copy_n(params.weights.data() + off, wc, wv.data());
      if (opt.apply_mask && mask)
        for (std::size_t i = 0; i < wc; ++i) wv[i] *= mask->keep[off + i];
    }
    if (opt.abs_weights)
      for (double& v : wv) v = std::fabs(v);

    std::vector<int> wshape = l.kind == LayerDesc::Kind::Dense
                                  ? std::vector<int>{l.in, l.out}
                                  : std::vector<int>{l.out, l.in, l.kernel, l.kernel};
    const int wnode = tape.input(ad::Tensor(std::move(wshape), std::move(wv)));
    fr.weight_nodes.push_back(wnode);

    std::vector<double> bv(params.b_off[li + 1] - params.b_off[li], 0.0);
    if (!opt.zero_bias)
      std::copy_n(params.biases.data() + params.b_off[li], bv.size(), bv.data());
    const int bnode = tape.input(ad::Tensor({l.out}, std::move(bv)));
    fr.bias_nodes.push_back(bnode);

    if (l.kind == LayerDesc::Kind::Dense) {
      if (!flat) {
        const ad::Tensor& v = tape.value(x);
        x = tape.reshape(x, {v.dim(0), v.dim(1) * v.dim(2) * v.dim(3)});
        flat = true;
      }
      x = tape.matmul(x, wnode);
    } else {
      x = tape.conv2d(x, wnode, l.stride, l.pad);
    }
    x = tape.bias_add(x, bnode);
    if (!opt.identity_activations) {
      if (l.act == Activation::Relu) x = tape.relu(x);
      else if (l.act == Activation::Tanh) x = tape.tanh(x);
    }
    if (l.kind == LayerDesc::Kind::Conv && l.pool_win > 0)
      x = tape.avg_pool(x, l.pool_win, l.pool_stride);
    st = walk_layer(l, st, li);
  }
  fr.logits = x;
  return fr;
}

ad::GradientVector gather_weight_grads(const ad::Tape& tape,
                                       const NetworkSpec& spec,
                                       const ForwardResult& fr) {
  ad::GradientVector g;
  g.reserve(weight_counts(spec).total);
  for (int id : fr.weight_nodes) {
    const ad::Tensor& t = tape.grad(id);
    g.insert(g.end(), t.data.begin(), t.data.end());
  }
  return g;
}

ad::GradientVector gather_bias_grads(const ad::Tape& tape,
                                     const NetworkSpec& spec,
                                     const ForwardResult& fr) {
  (void)spec;
  ad::GradientVector g;
  for (int id : fr.bias_nodes) {
    const ad::Tensor& t = tape.grad(id);
    g.insert(g.end(), t.data.begin(), t.data.end());
  }
  return g;
}

}  // namespace panning::model
