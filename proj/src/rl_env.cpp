#include "panning/rl_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "panning/rng.hpp"

namespace panning::rl {

using nlohmann::json;

PanningEnv::PanningEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.spec.validate();
}

PanningEnv::~PanningEnv() = default;
PanningEnv::PanningEnv(PanningEnv&&) noexcept = default;
PanningEnv& PanningEnv::operator=(PanningEnv&&) noexcept = default;

const model::Mask& PanningEnv::mask() const {
  if (!run_) throw std::logic_error("PanningEnv: mask() before reset()");
  return run_->mask();
}

const prune::PruneTrace& PanningEnv::trace() const {
  if (!run_) throw std::logic_error("PanningEnv: trace() before reset()");
  return run_->trace();
}

double PanningEnv::sample_rho_target(const EnvConfig& cfg, double u,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double p_high =
      std::clamp(cfg.base_high_prob + cfg.curriculum_gain * u, 0.0, 1.0);
  if (unit(rng) < p_high) {
    // extreme ratios: log-uniform in the remaining weight fraction
    const double lo = std::log(1.0 - cfg.rho_max);
    const double hi = std::log(1.0 - cfg.high_cut);
    return 1.0 - std::exp(lo + (hi - lo) * unit(rng));
  }
  const double lo = std::log(cfg.rho_min);
  const double hi = std::log(cfg.high_cut);
  return std::exp(lo + (hi - lo) * unit(rng));
}

EnvState PanningEnv::reset(std::uint64_t seed, double u) {
  std::mt19937_64 rng = make_rng(seed, /*stream=*/0xe41);
  rho_target_ = cfg_.fixed_rho > 0.0 ? cfg_.fixed_rho
                                     : sample_rho_target(cfg_, u, rng);
  params_ = model::init_params(cfg_.spec, derive_seed(seed, 0x9a));
  metrics::BalancedBatch batch =
      metrics::balanced_batch(cfg_.dataset, cfg_.dataset.classes,
                              cfg_.batch_per_class, derive_seed(seed, 0xb7),
                              cfg_.conv_layout);
  ctx_ = std::make_unique<metrics::EvalContext>(cfg_.spec, params_, std::move(batch));
  run_ = std::make_unique<prune::PanningRun>(*ctx_, rho_target_, cfg_.T);
  loss_ref_ = run_->current_loss();
  dloss_ref_ = run_->current_grad_norm_sq();
  done_ = false;
  const double rho_e0 =
      prune::effective_compression(run_->mask(), cfg_.spec, params_);
  return make_state(/*rho_t=*/0.0, rho_e0, /*t=*/0);
}

namespace {
double norm_ref(double v, double ref, double clampv) {
  const double r = ref != 0.0 ? v / ref : v;
  return std::clamp(r, 0.0, clampv);
}
}  // namespace

EnvState PanningEnv::make_state(double rho_t, double rho_e, int t) const {
  EnvState s;
  s[0] = norm_ref(loss_ref_, loss_ref_, cfg_.state_clamp);
  s[1] = norm_ref(dloss_ref_, dloss_ref_, cfg_.state_clamp);
  s[2] = norm_ref(run_->current_loss(), loss_ref_, cfg_.state_clamp);
  s[3] = norm_ref(run_->current_grad_norm_sq(), dloss_ref_, cfg_.state_clamp);
  s[4] = rho_t;
  s[5] = rho_e;
  s[6] = static_cast<double>(t) / cfg_.T;
  return s;
}

StepResult compose_reward(const EnvState& s, double rho_i, double rho_e,
                          int t, int T, double alpha) {
  StepResult res;
  res.state = s;
  res.r1 = std::fabs(s[0] - s[2]);
  res.r2 = std::fabs(s[1] - s[3]);
  res.r3 = alpha * std::fabs(rho_e - rho_i);
  const bool dead = rho_e == 1.0;
  res.done = dead || t >= T;
  res.r_done = dead ? static_cast<double>(T - t) : 0.0;
  res.reward = -(res.r1 + res.r2 + res.r3 + res.r_done);
  return res;
}

StepResult PanningEnv::step(const Action& a) {
  if (done_ || !run_) throw std::logic_error("PanningEnv: step on finished episode");
  metrics::FusionWeights p;
  p.synflow = (std::clamp(a[0], -1.0, 1.0) + 1.0) / 2.0;
  p.snip = (std::clamp(a[1], -1.0, 1.0) + 1.0) / 2.0;
  p.grasp = (std::clamp(a[2], -1.0, 1.0) + 1.0) / 2.0;
  if (p.synflow == 0.0 && p.snip == 0.0 && p.grasp == 0.0)
    p.synflow = p.snip = p.grasp = 1.0 / 3.0;  // a = (-1,-1,-1) still prunes

  const prune::IterationRecord& rec = run_->step(p);
  const StepResult res = compose_reward(make_state(rec.rho_i, rec.rho_e, rec.iter),
                                        rec.rho_i, rec.rho_e, rec.iter, cfg_.T,
                                        cfg_.alpha);
  done_ = res.done;
  return res;
}

struct EpisodeLogger::Impl {
  std::ofstream f;
};

EpisodeLogger::EpisodeLogger(const std::string& path) : impl_(new Impl) {
  impl_->f.open(path);
  if (!impl_->f) throw std::runtime_error("cannot open episode log " + path);
}

EpisodeLogger::~EpisodeLogger() = default;

void EpisodeLogger::log(int t, const EnvState& s, const Action& a,
                        const StepResult& r) {
  json j;
  j["t"] = t;
  j["s"] = s;
  j["a"] = a;
  j["r"] = r.reward;
  j["r1"] = r.r1;
  j["r2"] = r.r2;
  j["r3"] = r.r3;
  j["done"] = r.done;
  impl_->f << j.dump() << '\n';
}

}  // namespace panning::rl
