#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "panning/rl_env.hpp"
#include "panning/tape.hpp"

namespace panning::td3 {

// Fully-connected net with Tanh hidden activations, built on the same
// tape engine as the pruned models.
struct DenseNet {
  std::vector<int> sizes;
  bool tanh_out = false;
  std::vector<std::vector<double>> W;  // [in,out] row-major per layer
  std::vector<std::vector<double>> b;

  static DenseNet make(std::vector<int> sizes, bool tanh_out, std::uint64_t seed);

  struct TapeNodes {
    int out = -1;
    std::vector<int> Wn, bn;
  };
  TapeNodes forward(ad::Tape& tape, int x) const;

  std::vector<double> forward_row(const std::vector<double>& x) const;
  std::size_t layer_count() const { return W.size(); }
};

// Adam with default moment coefficients.
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void init_like(const DenseNet& net);
  void step(DenseNet& net, const std::vector<std::vector<double>>& gW,
            const std::vector<std::vector<double>>& gb);
};

struct Transition {
  rl::EnvState s{};
  rl::Action a{};
  double r = 0.0;
  rl::EnvState s2{};
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void add(Transition t);
  std::size_t size() const { return data_.size(); }
  const Transition& sample(std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

struct TD3Config {
  double lr = 3e-4;
  int start_timesteps = 2000;
  int max_timesteps = 200000;
  int batch = 256;
  double expl_noise = 0.1;
  double gamma = 0.99;
  double tau = 0.01;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  int policy_delay = 2;
  std::size_t replay_capacity = 100000;
  int hidden = 256;

  void validate() const;
};

// y = r + gamma * (1 - done) * min(q1, q2)
double critic_target_value(double r, bool done, double q1, double q2,
                           const TD3Config& cfg);

// clip(a + clip(noise, +-noise_clip), -1, 1) per component
rl::Action smoothed_target_action(const rl::Action& a, const rl::Action& noise,
                                  double noise_clip);

class TD3Agent {
 public:
  TD3Agent(const TD3Config& cfg, std::uint64_t seed);

  rl::Action select_action(const rl::EnvState& s, double sigma,
                           std::mt19937_64& rng) const;
  void update(const ReplayBuffer& buffer, std::mt19937_64& rng);

  const DenseNet& actor() const { return actor_; }
  const DenseNet& critic1() const { return critic1_; }
  const DenseNet& critic2() const { return critic2_; }
  const TD3Config& config() const { return cfg_; }
  long update_count() const { return updates_; }

  double q1(const rl::EnvState& s, const rl::Action& a) const;
  double q2(const rl::EnvState& s, const rl::Action& a) const;

  void save(const std::string& path) const;
  static TD3Agent load(const std::string& path);

  // test hooks
  DenseNet& mutable_actor() { return actor_; }
  void tie_critics_and_targets();

 private:
  void update_critics(const std::vector<const Transition*>& batch,
                      std::mt19937_64& rng);
  void update_actor(const std::vector<const Transition*>& batch);
  void polyak_all();

  TD3Config cfg_;
  DenseNet actor_, actor_t_;
  DenseNet critic1_, critic2_, critic1_t_, critic2_t_;
  Adam opt_actor_, opt_c1_, opt_c2_;
  long updates_ = 0;
};

struct CurvePoint {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  double mean_r1 = 0.0, mean_r2 = 0.0, mean_r3 = 0.0;
};

struct TrainResult {
  TD3Agent agent;
  std::vector<CurvePoint> curve;
};

TrainResult train_agent(rl::PanningEnv& env, const TD3Config& cfg,
                        std::uint64_t seed);

// Mean episode reward of a fixed policy over `episodes` seeded episodes;
// sigma 0 plays the actor deterministically, actor == nullptr plays
// uniform random actions. Also reports the per-episode rewards.
std::vector<double> evaluate_policy(rl::PanningEnv& env, const TD3Agent* agent,
                                    int episodes, std::uint64_t seed, double u);

void write_curve_csv(const std::vector<CurvePoint>& curve,
                     const std::string& path);

}  // namespace panning::td3
