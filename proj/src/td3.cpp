#include "panning/td3.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "panning/checkpoint.hpp"
#include "panning/rng.hpp"

namespace panning::td3 {

using nlohmann::json;

DenseNet DenseNet::make(std::vector<int> sizes, bool tanh_out, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("DenseNet: need at least 2 sizes");
  DenseNet net;
  net.sizes = std::move(sizes);
  net.tanh_out = tanh_out;
  std::mt19937_64 rng = make_rng(seed, /*stream=*/0x7d3);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    const int in = net.sizes[l], out = net.sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (double& v : w) v = dist(rng);
    std::vector<double> bias(static_cast<std::size_t>(out));
    for (double& v : bias) v = dist(rng);
    net.W.push_back(std::move(w));
    net.b.push_back(std::move(bias));
  }
  return net;
}

DenseNet::TapeNodes DenseNet::forward(ad::Tape& tape, int x) const {
  TapeNodes tn;
  for (std::size_t l = 0; l < W.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    tn.Wn.push_back(tape.input(ad::Tensor({in, out}, W[l])));
    tn.bn.push_back(tape.input(ad::Tensor({out}, b[l])));
    x = tape.bias_add(tape.matmul(x, tn.Wn.back()), tn.bn.back());
    if (l + 1 < W.size() || tanh_out) x = tape.tanh(x);
  }
  tn.out = x;
  return tn;
}

std::vector<double> DenseNet::forward_row(const std::vector<double>& x) const {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < W.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    std::vector<double> next(b[l]);
    for (int i = 0; i < in; ++i) {
      const double hv = h[static_cast<std::size_t>(i)];
      if (hv == 0.0) continue;
      const double* wr = W[l].data() + static_cast<std::size_t>(i) * out;
      for (int j = 0; j < out; ++j) next[static_cast<std::size_t>(j)] += hv * wr[j];
    }
    if (l + 1 < W.size() || tanh_out)
      for (double& v : next) v = std::tanh(v);
    h = std::move(next);
  }
  return h;
}

void Adam::init_like(const DenseNet& net) {
  t = 0;
  m.clear();
  v.clear();
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    m.push_back(std::vector<double>(net.W[l].size() + net.b[l].size(), 0.0));
    v.push_back(std::vector<double>(net.W[l].size() + net.b[l].size(), 0.0));
  }
}

void Adam::step(DenseNet& net, const std::vector<std::vector<double>>& gW,
                const std::vector<std::vector<double>>& gb) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    auto apply = [&](double* p, const double* g, std::size_t n, std::size_t moff) {
      for (std::size_t i = 0; i < n; ++i) {
        double& mi = m[l][moff + i];
        double& vi = v[l][moff + i];
        mi = beta1 * mi + (1.0 - beta1) * g[i];
        vi = beta2 * vi + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
      }
    };
    apply(net.W[l].data(), gW[l].data(), net.W[l].size(), 0);
    apply(net.b[l].data(), gb[l].data(), net.b[l].size(), net.W[l].size());
  }
}

void ReplayBuffer::add(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);  // FIFO overwrite
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  return data_[pick(rng)];
}

void TD3Config::validate() const {
  if (lr <= 0 || batch <= 0 || start_timesteps < 0 || max_timesteps <= 0 ||
      expl_noise < 0 || policy_noise < 0 || noise_clip < 0 || policy_delay < 1 ||
      replay_capacity == 0 || hidden <= 0)
    throw std::invalid_argument("TD3Config: non-positive field");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TD3Config: gamma out of (0,1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("TD3Config: tau out of (0,1]");
}

double critic_target_value(double r, bool done, double q1, double q2,
                           const TD3Config& cfg) {
  return r + cfg.gamma * (done ? 0.0 : 1.0) * std::min(q1, q2);
}

rl::Action smoothed_target_action(const rl::Action& a, const rl::Action& noise,
                                  double noise_clip) {
  rl::Action out{};
  for (int i = 0; i < rl::kActionDim; ++i)
    out[static_cast<std::size_t>(i)] =
        std::clamp(a[static_cast<std::size_t>(i)] +
                       std::clamp(noise[static_cast<std::size_t>(i)], -noise_clip, noise_clip),
                   -1.0, 1.0);
  return out;
}

TD3Agent::TD3Agent(const TD3Config& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int h = cfg_.hidden;
  actor_ = DenseNet::make({rl::kStateDim, h, h, rl::kActionDim}, true, derive_seed(seed, 1));
  critic1_ = DenseNet::make({rl::kStateDim + rl::kActionDim, h, h, 1}, false, derive_seed(seed, 2));
  critic2_ = DenseNet::make({rl::kStateDim + rl::kActionDim, h, h, 1}, false, derive_seed(seed, 3));
  actor_t_ = actor_;
  critic1_t_ = critic1_;
  critic2_t_ = critic2_;
  opt_actor_.lr = opt_c1_.lr = opt_c2_.lr = cfg_.lr;
  opt_actor_.init_like(actor_);
  opt_c1_.init_like(critic1_);
  opt_c2_.init_like(critic2_);
}

void TD3Agent::tie_critics_and_targets() {
  critic2_ = critic1_;
  opt_c2_.init_like(critic2_);
  actor_t_ = actor_;
  critic1_t_ = critic1_;
  critic2_t_ = critic2_;
}

rl::Action TD3Agent::select_action(const rl::EnvState& s, double sigma,
                                   std::mt19937_64& rng) const {
  const std::vector<double> out =
      actor_.forward_row(std::vector<double>(s.begin(), s.end()));
  rl::Action a{};
  std::normal_distribution<double> noise(0.0, sigma > 0 ? sigma : 1.0);
  for (int i = 0; i < rl::kActionDim; ++i) {
    double v = out[static_cast<std::size_t>(i)];
    if (sigma > 0) v += noise(rng);
    a[static_cast<std::size_t>(i)] = std::clamp(v, -1.0, 1.0);
  }
  return a;
}

double TD3Agent::q1(const rl::EnvState& s, const rl::Action& a) const {
  std::vector<double> x(s.begin(), s.end());
  x.insert(x.end(), a.begin(), a.end());
  return critic1_.forward_row(x)[0];
}

double TD3Agent::q2(const rl::EnvState& s, const rl::Action& a) const {
  std::vector<double> x(s.begin(), s.end());
  x.insert(x.end(), a.begin(), a.end());
  return critic2_.forward_row(x)[0];
}

namespace {

void gather_net_grads(const ad::Tape& tape, const DenseNet::TapeNodes& tn,
                      std::vector<std::vector<double>>& gW,
                      std::vector<std::vector<double>>& gb) {
  gW.clear();
  gb.clear();
  for (int id : tn.Wn) gW.push_back(tape.grad(id).data);
  for (int id : tn.bn) gb.push_back(tape.grad(id).data);
}

}  // namespace

void TD3Agent::update_critics(const std::vector<const Transition*>& batch,
                              std::mt19937_64& rng) {
  const int B = static_cast<int>(batch.size());

  // target y per transition, all-batch tapes for the target networks
  std::vector<double> s2flat;
  s2flat.reserve(static_cast<std::size_t>(B) * rl::kStateDim);
  for (const Transition* t : batch) s2flat.insert(s2flat.end(), t->s2.begin(), t->s2.end());
  ad::Tape ttape;
  const int s2id = ttape.input(ad::Tensor({B, rl::kStateDim}, s2flat));
  const DenseNet::TapeNodes at = actor_t_.forward(ttape, s2id);
  // copy: later tape ops may reallocate the node storage
  const ad::Tensor araw = ttape.value(at.out);

  std::normal_distribution<double> pnoise(0.0, cfg_.policy_noise);
  std::vector<double> a2flat(static_cast<std::size_t>(B) * rl::kActionDim);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < rl::kActionDim; ++j) {
      const double eps = std::clamp(pnoise(rng), -cfg_.noise_clip, cfg_.noise_clip);
      a2flat[static_cast<std::size_t>(i) * rl::kActionDim + j] =
          std::clamp(araw.data[static_cast<std::size_t>(i) * rl::kActionDim + j] + eps,
                     -1.0, 1.0);
    }
  const int a2id = ttape.input(ad::Tensor({B, rl::kActionDim}, a2flat));
  const int sa2 = ttape.concat_cols(s2id, a2id);
  const ad::Tensor q1t = ttape.value(critic1_t_.forward(ttape, sa2).out);
  const ad::Tensor q2t = ttape.value(critic2_t_.forward(ttape, sa2).out);

  std::vector<double> y(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i)
    y[static_cast<std::size_t>(i)] = critic_target_value(
        batch[static_cast<std::size_t>(i)]->r, batch[static_cast<std::size_t>(i)]->done,
        q1t.data[static_cast<std::size_t>(i)], q2t.data[static_cast<std::size_t>(i)], cfg_);

  std::vector<double> saflat;
  saflat.reserve(static_cast<std::size_t>(B) * (rl::kStateDim + rl::kActionDim));
  for (const Transition* t : batch) {
    saflat.insert(saflat.end(), t->s.begin(), t->s.end());
    saflat.insert(saflat.end(), t->a.begin(), t->a.end());
  }

  auto regress = [&](DenseNet& critic, Adam& opt) {
    ad::Tape tape;
    const int sa = tape.input(ad::Tensor({B, rl::kStateDim + rl::kActionDim}, saflat));
    const DenseNet::TapeNodes tn = critic.forward(tape, sa);
    const int yid = tape.input(ad::Tensor({B, 1}, y));
    const int diff = tape.sub(tn.out, yid);
    const int loss = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / B);
    tape.backward(loss);
    std::vector<std::vector<double>> gW, gb;
    gather_net_grads(tape, tn, gW, gb);
    opt.step(critic, gW, gb);
  };
  regress(critic1_, opt_c1_);
  regress(critic2_, opt_c2_);
}

void TD3Agent::update_actor(const std::vector<const Transition*>& batch) {
  const int B = static_cast<int>(batch.size());
  std::vector<double> sflat;
  sflat.reserve(static_cast<std::size_t>(B) * rl::kStateDim);
  for (const Transition* t : batch) sflat.insert(sflat.end(), t->s.begin(), t->s.end());
  ad::Tape tape;
  const int sid = tape.input(ad::Tensor({B, rl::kStateDim}, sflat));
  const DenseNet::TapeNodes an = actor_.forward(tape, sid);
  const int sa = tape.concat_cols(sid, an.out);
  const DenseNet::TapeNodes cn = critic1_.forward(tape, sa);
  const int loss = tape.scale(tape.sum(cn.out), -1.0 / B);  // maximize Q
  tape.backward(loss);
  std::vector<std::vector<double>> gW, gb;
  gather_net_grads(tape, an, gW, gb);
  opt_actor_.step(actor_, gW, gb);
}

void TD3Agent::polyak_all() {
  auto mix = [tau = cfg_.tau](DenseNet& target, const DenseNet& online) {
    for (std::size_t l = 0; l < target.W.size(); ++l) {
      for (std::size_t i = 0; i < target.W[l].size(); ++i)
        target.W[l][i] = tau * online.W[l][i] + (1.0 - tau) * target.W[l][i];
      for (std::size_t i = 0; i < target.b[l].size(); ++i)
        target.b[l][i] = tau * online.b[l][i] + (1.0 - tau) * target.b[l][i];
    }
  };
  mix(actor_t_, actor_);
  mix(critic1_t_, critic1_);
  mix(critic2_t_, critic2_);
}

void TD3Agent::update(const ReplayBuffer& buffer, std::mt19937_64& rng) {
  if (buffer.size() < static_cast<std::size_t>(cfg_.batch))
    throw std::invalid_argument("TD3Agent::update: buffer smaller than batch");
  std::vector<const Transition*> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.batch));
  for (int i = 0; i < cfg_.batch; ++i) batch.push_back(&buffer.sample(rng));
  update_critics(batch, rng);
  ++updates_;
  if (updates_ % cfg_.policy_delay == 0) {
    update_actor(batch);
    polyak_all();
  }
}

void TD3Agent::save(const std::string& path) const {
  ckpt::Checkpoint c;
  json j;
  j["hidden"] = cfg_.hidden;
  j["actor_sizes"] = actor_.sizes;
  j["critic_sizes"] = critic1_.sizes;
  c.spec_json = j.dump();
  auto put_net = [&c](const std::string& prefix, const DenseNet& net) {
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      c.set(prefix + ".W" + std::to_string(l), net.W[l]);
      c.set(prefix + ".b" + std::to_string(l), net.b[l]);
    }
  };
  put_net("actor", actor_);
  put_net("critic1", critic1_);
  put_net("critic2", critic2_);
  ckpt::save(c, path);
}

TD3Agent TD3Agent::load(const std::string& path) {
  const ckpt::Checkpoint c = ckpt::load(path);
  const json j = json::parse(c.spec_json);
  TD3Config cfg;
  cfg.hidden = j.at("hidden");
  TD3Agent agent(cfg, /*seed=*/0);
  auto get_net = [&c](const std::string& prefix, DenseNet& net) {
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      const auto* w = c.find(prefix + ".W" + std::to_string(l));
      const auto* b = c.find(prefix + ".b" + std::to_string(l));
      if (!w || !b || w->size() != net.W[l].size() || b->size() != net.b[l].size())
        throw std::runtime_error("agent checkpoint: missing or misshaped " + prefix);
      net.W[l] = *w;
      net.b[l] = *b;
    }
  };
  get_net("actor", agent.actor_);
  get_net("critic1", agent.critic1_);
  get_net("critic2", agent.critic2_);
  agent.actor_t_ = agent.actor_;
  agent.critic1_t_ = agent.critic1_;
  agent.critic2_t_ = agent.critic2_;
  return agent;
}

TrainResult train_agent(rl::PanningEnv& env, const TD3Config& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  TD3Agent agent(cfg, derive_seed(seed, 0xa9e27));
  ReplayBuffer buffer(cfg.replay_capacity);
  std::mt19937_64 act_rng = make_rng(seed, 0xac7);
  std::mt19937_64 upd_rng = make_rng(seed, 0x0bd);
  std::uniform_real_distribution<double> uact(-1.0, 1.0);

  std::vector<CurvePoint> curve;
  int episode = 0;
  double ep_reward = 0.0, ep_r1 = 0.0, ep_r2 = 0.0, ep_r3 = 0.0;
  int ep_len = 0;
  rl::EnvState s = env.reset(derive_seed(seed, 0x50000), 0.0);

  for (int t = 1; t <= cfg.max_timesteps; ++t) {
    rl::Action a{};
    if (t <= cfg.start_timesteps) {
      for (double& v : a) v = uact(act_rng);
    } else {
      a = agent.select_action(s, cfg.expl_noise, act_rng);
    }
    const rl::StepResult res = env.step(a);
    buffer.add({s, a, res.reward, res.state, res.done});
    s = res.state;
    ep_reward += res.reward;
    ep_r1 += res.r1;
    ep_r2 += res.r2;
    ep_r3 += res.r3;
    ++ep_len;

    if (t > cfg.start_timesteps && buffer.size() >= static_cast<std::size_t>(cfg.batch))
      agent.update(buffer, upd_rng);

    if (res.done) {
      ++episode;
      CurvePoint cp;
      cp.episode = episode;
      cp.steps = t;
      cp.reward = ep_reward;
      cp.mean_r1 = ep_r1 / ep_len;
      cp.mean_r2 = ep_r2 / ep_len;
      cp.mean_r3 = ep_r3 / ep_len;
      curve.push_back(cp);
      ep_reward = ep_r1 = ep_r2 = ep_r3 = 0.0;
      ep_len = 0;
      if (t < cfg.max_timesteps) {
        const double u = static_cast<double>(t) / cfg.max_timesteps;
        s = env.reset(derive_seed(seed, 0x50000 + static_cast<std::uint64_t>(episode)), u);
      }
    }
  }
  return {std::move(agent), std::move(curve)};
}

std::vector<double> evaluate_policy(rl::PanningEnv& env, const TD3Agent* agent,
                                    int episodes, std::uint64_t seed, double u) {
  std::vector<double> rewards;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng = make_rng(seed, 0xe7a1 + static_cast<std::uint64_t>(e));
    std::uniform_real_distribution<double> uact(-1.0, 1.0);
    rl::EnvState s = env.reset(derive_seed(seed, 0x60000 + static_cast<std::uint64_t>(e)), u);
    double total = 0.0;
    while (!env.done()) {
      rl::Action a{};
      if (agent) {
        a = agent->select_action(s, 0.0, rng);
      } else {
        for (double& v : a) v = uact(rng);
      }
      const rl::StepResult res = env.step(a);
      total += res.reward;
      s = res.state;
    }
    rewards.push_back(total);
  }
  return rewards;
}

void write_curve_csv(const std::vector<CurvePoint>& curve,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open curve file " + path);
  f << "episode,steps,reward,mean_r1,mean_r2,mean_r3\n";
  for (const CurvePoint& c : curve)
    f << c.episode << ',' << c.steps << ',' << c.reward << ',' << c.mean_r1
      << ',' << c.mean_r2 << ',' << c.mean_r3 << '\n';
}

}  // namespace panning::td3
