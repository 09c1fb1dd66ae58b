#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panning/metrics.hpp"
#include "panning/model.hpp"

namespace panning::prune {

struct PanningConfig {
  double rho_target = 0.9;
  int T = 100;
  enum class Schedule { Table3, Fixed } schedule = Schedule::Table3;
  metrics::FusionWeights fixed_p;
  metrics::NormKind norm = metrics::NormKind::Sum;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double rho_i = 0.0;
  std::size_t keep = 0;
  metrics::FusionWeights p;
  std::vector<std::size_t> per_layer_kept;
  double rho_e = 0.0;
  double loss_sparse = 0.0;
  double dloss_sparse = 0.0;  // g'g on the new mask
};

struct PruneTrace {
  std::vector<IterationRecord> records;
};

// rho_i = 1 - (1 - rho_target)^(i/T)
double schedule_ratio(int i, int T, double rho_target);

// Fixed fusion bands keyed on the current rho_i (half-open upper bounds).
metrics::FusionWeights band_fusion(double rho_i);

// Keeps round(m (1 - rho_i)) highest scores; ties go to the lower flat
// index. Throws when the keep count reaches zero.
model::Mask topk_mask(const std::vector<double>& scores, double rho_i,
                      std::size_t m);

// Fraction of weights that are removed or retained but disconnected,
// judged on the unit network (weights = mask bits, linearized).
double effective_compression(const model::Mask& mask,
                             const model::NetworkSpec& spec,
                             const model::Parameters& params);

// One Panning run driven step by step. The fixed-schedule pruner and the
// RL environment both drive this class; only the choice of p differs.
class PanningRun {
 public:
  PanningRun(const metrics::EvalContext& ctx, double rho_target, int T);

  const IterationRecord& step(const metrics::FusionWeights& p);
  bool finished() const { return iter_ >= T_; }
  int iter() const { return iter_; }
  int total_iters() const { return T_; }
  double rho_target() const { return rho_target_; }
  const model::Mask& mask() const { return mask_; }
  const PruneTrace& trace() const { return trace_; }
  // loss / g'g at the current mask (refreshed after every step)
  double current_loss() const { return current_.loss; }
  double current_grad_norm_sq() const;
  std::size_t weight_count() const { return m_; }

 private:
  const metrics::EvalContext* ctx_;
  double rho_target_;
  int T_;
  int iter_ = 0;
  std::size_t m_ = 0;
  model::Mask mask_;
  metrics::SaliencyScores synflow_n_;  // data-free, constant per run
  metrics::LossGrad current_;
  PruneTrace trace_;
};

struct PanningResult {
  model::Mask mask;
  PruneTrace trace;
};

PanningResult panning(const metrics::EvalContext& ctx, const PanningConfig& cfg);

enum class SingleMetric { Snip, GraspOriginal, GraspModified, Synflow };

// FORCE-style iterative pruning with one metric (T = 1 is single shot).
PanningResult iterative_single_metric(const metrics::EvalContext& ctx,
                                      SingleMetric metric, double rho_target,
                                      int T);

std::vector<std::size_t> per_layer_kept(const model::Mask& mask,
                                        const model::NetworkSpec& spec);

void write_trace_jsonl(const PruneTrace& t, const std::string& path);

}  // namespace panning::prune
