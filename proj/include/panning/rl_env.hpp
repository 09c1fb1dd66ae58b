#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "panning/data.hpp"
#include "panning/pruner.hpp"

namespace panning::rl {

inline constexpr int kStateDim = 7;
inline constexpr int kActionDim = 3;

// (N(L), N(dL), N(L_s), N(dL_s), rho_t, rho_e, t/T)
using EnvState = std::array<double, kStateDim>;
using Action = std::array<double, kActionDim>;

struct StepResult {
  EnvState state{};
  double reward = 0.0;
  bool done = false;
  // unsigned penalty terms, logged for diagnostics
  double r1 = 0.0, r2 = 0.0, r3 = 0.0, r_done = 0.0;
};

// Eq. 7 arithmetic on an already-built state: r1 = |N(L) - N(L_s)|,
// r2 = |N(dL) - N(dL_s)|, r3 = alpha |rho_e - rho_t|, r_done = T - t when
// the network died (rho_e = 1); reward = -(r1 + r2 + r3 + r_done).
StepResult compose_reward(const EnvState& s, double rho_i, double rho_e,
                          int t, int T, double alpha);

struct EnvConfig {
  model::NetworkSpec spec;
  data::Dataset dataset;
  int batch_per_class = 2;
  int T = 20;
  double alpha = 100.0;
  double state_clamp = 10.0;
  // episode target ratio range and curriculum law:
  // Pr[rho_T > high_cut] = base_high_prob + curriculum_gain * u
  double rho_min = 0.80;
  double rho_max = 0.9999;
  double high_cut = 0.99;
  double base_high_prob = 0.1;
  double curriculum_gain = 0.6;
  bool conv_layout = false;
  double fixed_rho = 0.0;  // in (0,1): bypass sampling (agent-driven pruning)
};

// One Panning run wrapped as an episodic environment. Stateful and
// single-threaded; run several instances for parallel collection.
class PanningEnv {
 public:
  explicit PanningEnv(EnvConfig cfg);
  ~PanningEnv();
  PanningEnv(PanningEnv&&) noexcept;
  PanningEnv& operator=(PanningEnv&&) noexcept;

  // u in [0,1]: curriculum progress of agent training.
  EnvState reset(std::uint64_t seed, double u);
  StepResult step(const Action& a);  // throws after done

  bool done() const { return done_; }
  double episode_rho_target() const { return rho_target_; }
  const model::Mask& mask() const;
  const prune::PruneTrace& trace() const;
  int T() const { return cfg_.T; }

  // curriculum sampling law, exposed for testing
  static double sample_rho_target(const EnvConfig& cfg, double u,
                                  std::mt19937_64& rng);

 private:
  EnvState make_state(double rho_t, double rho_e, int t) const;

  EnvConfig cfg_;
  model::Parameters params_;
  std::unique_ptr<metrics::EvalContext> ctx_;
  std::unique_ptr<prune::PanningRun> run_;
  double rho_target_ = 0.0;
  double loss_ref_ = 1.0;       // dense-network references, frozen at reset
  double dloss_ref_ = 1.0;
  bool done_ = true;
};

// Optional JSON-lines episode log: (t, s, a, r, r1, r2, r3, done).
class EpisodeLogger {
 public:
  explicit EpisodeLogger(const std::string& path);
  ~EpisodeLogger();
  void log(int t, const EnvState& s, const Action& a, const StepResult& r);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace panning::rl
