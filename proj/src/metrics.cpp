#include "panning/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "panning/rng.hpp"

namespace panning::metrics {

void FusionWeights::validate() const {
  if (synflow < 0.0 || snip < 0.0 || grasp < 0.0)
    throw std::invalid_argument("fusion weights must be nonnegative");
  if (synflow == 0.0 && snip == 0.0 && grasp == 0.0)
    throw std::invalid_argument("fusion weights are all zero");
}

BalancedBatch balanced_batch(const data::Dataset& d, int l, int k,
                             std::uint64_t seed, bool conv_layout) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(l));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int c = d.labels[i];
    if (c >= 0 && c < l) by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  std::mt19937_64 rng = make_rng(seed, /*stream=*/0xba7c);
  BalancedBatch b;
  for (int c = 0; c < l; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(pool.size()) < k)
      throw std::invalid_argument("balanced_batch: class " + std::to_string(c) + " has " +
                                  std::to_string(pool.size()) + " samples, need " +
                                  std::to_string(k));
    // partial Fisher-Yates: first k entries become the draw
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
      b.indices.push_back(pool[static_cast<std::size_t>(i)]);
    }
  }
  b.images = data::gather_images(d, b.indices, conv_layout);
  b.labels = data::gather_labels(d, b.indices);
  b.id = "l" + std::to_string(l) + "k" + std::to_string(k) + "s" + std::to_string(seed);
  return b;
}

EvalContext::EvalContext(const model::NetworkSpec& spec,
                         const model::Parameters& params, BalancedBatch batch)
    : spec_(&spec), params_(&params), batch_(std::move(batch)) {}

LossGrad EvalContext::loss_grad(const model::Mask& mask) const {
  ad::Tape tape;
  model::ForwardResult fr = model::forward(tape, *spec_, *params_, &mask, batch_.images);
  const int loss = tape.softmax_cross_entropy(fr.logits, batch_.labels);
  LossGrad out;
  out.loss = tape.value(loss).data[0];
  if (!std::isfinite(out.loss))
    throw std::runtime_error("metrics: non-finite loss on batch " + batch_.id);
  tape.backward(loss);
  out.grad = model::gather_weight_grads(tape, *spec_, fr);
  return out;
}

LossGrad EvalContext::loss_grad_at(const ad::GradientVector& theta) const {
  ad::Tape tape;
  model::ForwardOptions opt;
  opt.weight_override = &theta;
  model::ForwardResult fr = model::forward(tape, *spec_, *params_, nullptr, batch_.images, opt);
  const int loss = tape.softmax_cross_entropy(fr.logits, batch_.labels);
  LossGrad out;
  out.loss = tape.value(loss).data[0];
  if (!std::isfinite(out.loss))
    throw std::runtime_error("metrics: non-finite loss on batch " + batch_.id);
  tape.backward(loss);
  out.grad = model::gather_weight_grads(tape, *spec_, fr);
  return out;
}

SaliencyScores snip_score(const EvalContext& ctx, const model::Mask& mask) {
  const LossGrad lg = ctx.loss_grad(mask);
  SaliencyScores s;
  s.metric = "snip";
  s.batch_id = ctx.batch().id;
  s.s.resize(lg.grad.size());
  const auto& w = ctx.params().weights;
  for (std::size_t i = 0; i < s.s.size(); ++i) s.s[i] = std::fabs(lg.grad[i] * w[i]);
  return s;
}

std::vector<double> grasp_raw_from_grad(const ad::GradFn& grad_fn,
                                        const ad::GradientVector& theta,
                                        const std::vector<double>& w, double eps) {
  const ad::GradientVector g = grad_fn(theta);
  const ad::GradientVector hg = ad::hvp_fd(grad_fn, theta, g, eps);
  std::vector<double> raw(w.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = 2.0 * hg[i] * w[i];
  return raw;
}

SaliencyScores grasp_score(const EvalContext& ctx, const model::Mask& mask,
                           GraspVariant variant, double eps) {
  const auto& w = ctx.params().weights;
  ad::GradientVector theta(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) theta[i] = w[i] * mask.keep[i];
  const ad::GradFn grad_fn = [&ctx](const ad::GradientVector& t) {
    return ctx.loss_grad_at(t).grad;
  };
  SaliencyScores s;
  s.metric = variant == GraspVariant::Original ? "grasp" : "grasp_modified";
  s.batch_id = ctx.batch().id;
  s.s = grasp_raw_from_grad(grad_fn, theta, w, eps);
  if (variant == GraspVariant::Modified)
    for (double& v : s.s) v = std::fabs(v);
  return s;
}

SaliencyScores synflow_score(const model::NetworkSpec& spec,
                             const model::Parameters& params) {
  ad::Tape tape;
  ad::Tensor ones = spec.conv_input()
                        ? ad::Tensor({1, spec.in_c, spec.in_h, spec.in_w})
                        : ad::Tensor({1, spec.layers.front().in});
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  model::ForwardOptions opt;
  opt.apply_mask = false;
  opt.abs_weights = true;
  opt.identity_activations = true;
  opt.zero_bias = true;
  model::ForwardResult fr = model::forward(tape, spec, params, nullptr, ones, opt);
  const int r = tape.sum(fr.logits);
  tape.backward(r);
  const ad::GradientVector g = model::gather_weight_grads(tape, spec, fr);
  SaliencyScores s;
  s.metric = "synflow";
  s.batch_id = "data-free";
  s.s.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    s.s[i] = g[i] * std::fabs(params.weights[i]);
  return s;
}

SaliencyScores normalize(const SaliencyScores& in, NormKind kind) {
  SaliencyScores out = in;
  if (kind == NormKind::Sum) {
    double total = 0.0;
    for (double v : in.s) total += v;
    if (total == 0.0)
      throw std::invalid_argument("normalize: all-zero scores for metric " + in.metric);
    const double inv = 1.0 / total;
    for (double& v : out.s) v *= inv;
  } else {
    double lo = in.s[0], hi = in.s[0];
    for (double v : in.s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi == lo)
      throw std::invalid_argument("normalize: constant scores for metric " + in.metric);
    const double inv = 1.0 / (hi - lo);
    for (double& v : out.s) v = (v - lo) * inv;
  }
  return out;
}

SaliencyScores fuse(const FusionWeights& p, const SaliencyScores& synflow_n,
                    const SaliencyScores& snip_n, const SaliencyScores& grasp_n) {
  p.validate();
  if (synflow_n.s.size() != snip_n.s.size() || snip_n.s.size() != grasp_n.s.size())
    throw std::invalid_argument("fuse: score lengths differ");
  SaliencyScores out;
  out.metric = "fused";
  out.batch_id = snip_n.batch_id;
  out.s.resize(snip_n.s.size());
  for (std::size_t i = 0; i < out.s.size(); ++i)
    out.s[i] = p.synflow * synflow_n.s[i] + p.snip * snip_n.s[i] + p.grasp * grasp_n.s[i];
  return out;
}

}  // namespace panning::metrics
