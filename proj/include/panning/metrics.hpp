#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panning/data.hpp"
#include "panning/model.hpp"

namespace panning::metrics {

struct SaliencyScores {
  std::string metric;
  std::string batch_id;
  std::vector<double> s;  // aligned with Parameters.weights
};

// p1 SynFlow, p2 SNIP, p3 GraSP.
struct FusionWeights {
  double synflow = 0.0;
  double snip = 0.0;
  double grasp = 0.0;

  void validate() const;  // all >= 0, at least one > 0
};

struct BalancedBatch {
  ad::Tensor images;
  std::vector<int> labels;
  std::vector<int> indices;  // rows drawn from the source dataset
  std::string id;
};

// l classes x k samples each, deterministic per seed.
BalancedBatch balanced_batch(const data::Dataset& d, int l, int k,
                             std::uint64_t seed, bool conv_layout);

struct LossGrad {
  double loss = 0.0;
  ad::GradientVector grad;  // d loss / d (masked weight leaf)
};

// Evaluation context for the gradient-based metrics: one network, one
// balanced batch. Gradients are taken at the masked point c .* w (or at
// an explicit override theta), which is what permits resurrection.
class EvalContext {
 public:
  EvalContext(const model::NetworkSpec& spec, const model::Parameters& params,
              BalancedBatch batch);

  LossGrad loss_grad(const model::Mask& mask) const;
  LossGrad loss_grad_at(const ad::GradientVector& theta) const;

  const model::NetworkSpec& spec() const { return *spec_; }
  const model::Parameters& params() const { return *params_; }
  const BalancedBatch& batch() const { return batch_; }

 private:
  const model::NetworkSpec* spec_;
  const model::Parameters* params_;
  BalancedBatch batch_;
};

enum class GraspVariant { Original, Modified };
enum class NormKind { Sum, MinMax };

// |dL/dtheta .* w|: gradient at the masked point, full weight value.
SaliencyScores snip_score(const EvalContext& ctx, const model::Mask& mask);

// 2 (H g) .* w with H g by central finite differences of the gradient.
// Original keeps the signed value, Modified its magnitude.
SaliencyScores grasp_score(const EvalContext& ctx, const model::Mask& mask,
                           GraspVariant variant, double eps = 0.0);

// Data-free score on the |w| network with all-ones input and identity
// activations; the mask does not enter (spec'd resurrection semantics).
SaliencyScores synflow_score(const model::NetworkSpec& spec,
                             const model::Parameters& params);

SaliencyScores normalize(const SaliencyScores& s, NormKind kind = NormKind::Sum);

SaliencyScores fuse(const FusionWeights& p, const SaliencyScores& synflow_n,
                    const SaliencyScores& snip_n, const SaliencyScores& grasp_n);

// Test seam for the GraSP arithmetic: raw_i = 2 (H g)_i * w_i given a
// gradient oracle for an arbitrary loss.
std::vector<double> grasp_raw_from_grad(const ad::GradFn& grad_fn,
                                        const ad::GradientVector& theta,
                                        const std::vector<double>& w,
                                        double eps = 0.0);

}  // namespace panning::metrics
