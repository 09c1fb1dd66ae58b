#include "panning/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "panning/kernels.hpp"

namespace panning::prune {

using nlohmann::json;

void PanningConfig::validate() const {
  if (!(rho_target > 0.0 && rho_target < 1.0))
    throw std::invalid_argument("panning: rho_target must lie in (0,1)");
  if (T < 1) throw std::invalid_argument("panning: T must be >= 1");
  if (schedule == Schedule::Fixed) fixed_p.validate();
}

double schedule_ratio(int i, int T, double rho_target) {
  return 1.0 - std::pow(1.0 - rho_target, static_cast<double>(i) / T);
}

metrics::FusionWeights band_fusion(double rho_i) {
  if (rho_i <= 0.8) return {0.2, 0.5, 0.3};
  if (rho_i <= 0.9) return {0.2, 0.4, 0.4};
  if (rho_i <= 0.98) return {0.2, 0.3, 0.5};
  if (rho_i <= 0.99) return {0.4, 0.2, 0.4};
  return {0.5, 0.0, 0.5};
}

model::Mask topk_mask(const std::vector<double>& scores, double rho_i,
                      std::size_t m) {
  if (scores.size() != m)
    throw std::invalid_argument("topk_mask: score length " + std::to_string(scores.size()) +
                                " vs m " + std::to_string(m));
  const auto keep = static_cast<std::size_t>(
      std::llround(static_cast<double>(m) * (1.0 - rho_i)));
  if (keep == 0)
    throw std::invalid_argument("topk_mask: keep count is zero (degenerate network)");
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                   [&scores](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return a < b;  // tie: lower flat index wins
                   });
  model::Mask mask{std::vector<double>(m, 0.0)};
  for (std::size_t i = 0; i < keep; ++i) mask.keep[idx[i]] = 1.0;
  return mask;
}

double effective_compression(const model::Mask& mask,
                             const model::NetworkSpec& spec,
                             const model::Parameters& params) {
  ad::Tape tape;
  ad::Tensor ones = spec.conv_input()
                        ? ad::Tensor({1, spec.in_c, spec.in_h, spec.in_w})
                        : ad::Tensor({1, spec.layers.front().in});
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  model::ForwardOptions opt;
  opt.weight_override = &mask.keep;  // unit network: weights are the mask bits
  opt.identity_activations = true;
  opt.zero_bias = true;
  model::ForwardResult fr = model::forward(tape, spec, params, nullptr, ones, opt);
  tape.backward(tape.sum(fr.logits));
  const ad::GradientVector g = model::gather_weight_grads(tape, spec, fr);
  std::size_t effective = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (mask.keep[i] != 0.0 && g[i] > 0.0) ++effective;
  return 1.0 - static_cast<double>(effective) / static_cast<double>(g.size());
}

std::vector<std::size_t> per_layer_kept(const model::Mask& mask,
                                        const model::NetworkSpec& spec) {
  const model::WeightCounts wc = model::weight_counts(spec);
  std::vector<std::size_t> kept(wc.per_layer.size(), 0);
  std::size_t off = 0;
  for (std::size_t l = 0; l < wc.per_layer.size(); ++l) {
    for (std::size_t i = 0; i < wc.per_layer[l]; ++i)
      if (mask.keep[off + i] != 0.0) ++kept[l];
    off += wc.per_layer[l];
  }
  return kept;
}

PanningRun::PanningRun(const metrics::EvalContext& ctx, double rho_target, int T)
    : ctx_(&ctx), rho_target_(rho_target), T_(T) {
  m_ = ctx.params().weights.size();
  mask_ = model::Mask::ones(m_);
  synflow_n_ = metrics::normalize(metrics::synflow_score(ctx.spec(), ctx.params()));
  current_ = ctx.loss_grad(mask_);
}

double PanningRun::current_grad_norm_sq() const {
  return kernels::ops().dot(current_.grad.data(), current_.grad.data(),
                            current_.grad.size());
}

namespace {

// A dead sparse network has zero loss gradient, which zeroes SNIP and
// GraSP outright. Normalizing would throw; a zero contribution lets the
// remaining metrics (SynFlow is never all-zero) carry the iteration.
metrics::SaliencyScores normalize_or_zero(metrics::SaliencyScores s) {
  double total = 0.0;
  for (double v : s.s) total += std::fabs(v);
  if (total == 0.0) return s;
  return metrics::normalize(s);
}

}  // namespace

const IterationRecord& PanningRun::step(const metrics::FusionWeights& p) {
  if (finished()) throw std::logic_error("PanningRun: step after final iteration");
  const auto& w = ctx_->params().weights;

  // SNIP from the gradient already held for the current mask.
  metrics::SaliencyScores snip;
  snip.metric = "snip";
  snip.s.resize(m_);
  for (std::size_t i = 0; i < m_; ++i)
    snip.s[i] = std::fabs(current_.grad[i] * w[i]);

  metrics::SaliencyScores grasp =
      metrics::grasp_score(*ctx_, mask_, metrics::GraspVariant::Modified);

  const metrics::SaliencyScores fused =
      metrics::fuse(p, synflow_n_, normalize_or_zero(std::move(snip)),
                    normalize_or_zero(std::move(grasp)));

  ++iter_;
  IterationRecord rec;
  rec.iter = iter_;
  rec.rho_i = schedule_ratio(iter_, T_, rho_target_);
  rec.p = p;
  mask_ = topk_mask(fused.s, rec.rho_i, m_);
  rec.keep = mask_.count_kept();
  rec.per_layer_kept = per_layer_kept(mask_, ctx_->spec());
  rec.rho_e = effective_compression(mask_, ctx_->spec(), ctx_->params());
  current_ = ctx_->loss_grad(mask_);
  rec.loss_sparse = current_.loss;
  rec.dloss_sparse = current_grad_norm_sq();
  trace_.records.push_back(rec);
  return trace_.records.back();
}

PanningResult panning(const metrics::EvalContext& ctx, const PanningConfig& cfg) {
  cfg.validate();
  PanningRun run(ctx, cfg.rho_target, cfg.T);
  while (!run.finished()) {
    const double rho_next = schedule_ratio(run.iter() + 1, cfg.T, cfg.rho_target);
    const metrics::FusionWeights p = cfg.schedule == PanningConfig::Schedule::Table3
                                         ? band_fusion(rho_next)
                                         : cfg.fixed_p;
    run.step(p);
  }
  return {run.mask(), run.trace()};
}

PanningResult iterative_single_metric(const metrics::EvalContext& ctx,
                                      SingleMetric metric, double rho_target,
                                      int T) {
  if (!(rho_target > 0.0 && rho_target < 1.0) || T < 1)
    throw std::invalid_argument("iterative_single_metric: bad rho_target or T");
  const std::size_t m = ctx.params().weights.size();
  model::Mask mask = model::Mask::ones(m);
  PruneTrace trace;
  for (int i = 1; i <= T; ++i) {
    std::vector<double> scores;
    switch (metric) {
      case SingleMetric::Snip:
        scores = metrics::snip_score(ctx, mask).s;
        break;
      case SingleMetric::GraspOriginal: {
        // GraSP convention: retain the lowest signed scores.
        scores = metrics::grasp_score(ctx, mask, metrics::GraspVariant::Original).s;
        for (double& v : scores) v = -v;
        break;
      }
      case SingleMetric::GraspModified:
        scores = metrics::grasp_score(ctx, mask, metrics::GraspVariant::Modified).s;
        break;
      case SingleMetric::Synflow:
        scores = metrics::synflow_score(ctx.spec(), ctx.params()).s;
        break;
    }
    IterationRecord rec;
    rec.iter = i;
    rec.rho_i = schedule_ratio(i, T, rho_target);
    mask = topk_mask(scores, rec.rho_i, m);
    rec.keep = mask.count_kept();
    rec.per_layer_kept = per_layer_kept(mask, ctx.spec());
    rec.rho_e = effective_compression(mask, ctx.spec(), ctx.params());
    const metrics::LossGrad lg = ctx.loss_grad(mask);
    rec.loss_sparse = lg.loss;
    rec.dloss_sparse = kernels::ops().dot(lg.grad.data(), lg.grad.data(), lg.grad.size());
    trace.records.push_back(rec);
  }
  return {std::move(mask), std::move(trace)};
}

void write_trace_jsonl(const PruneTrace& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open trace file " + path);
  for (const IterationRecord& r : t.records) {
    json j;
    j["iter"] = r.iter;
    j["rho_i"] = r.rho_i;
    j["keep"] = r.keep;
    j["p"] = {r.p.synflow, r.p.snip, r.p.grasp};
    j["per_layer_kept"] = r.per_layer_kept;
    j["rho_e"] = r.rho_e;
    j["loss_sparse"] = r.loss_sparse;
    j["dloss_sparse"] = r.dloss_sparse;
    f << j.dump() << '\n';
  }
}

}  // namespace panning::prune
