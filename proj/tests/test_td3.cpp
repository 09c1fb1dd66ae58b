#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "panning/rng.hpp"
#include "panning/td3.hpp"

using namespace panning;

namespace {

rl::EnvConfig tiny_env(std::uint64_t data_seed = 7) {
  rl::EnvConfig cfg;
  cfg.spec = model::NetworkSpec::mlp({8, 10, 3});
  cfg.dataset = data::synthetic_classification(3, 12, 8, data_seed);
  cfg.T = 6;
  cfg.batch_per_class = 2;
  return cfg;
}

td3::TD3Config tiny_cfg() {
  td3::TD3Config cfg;
  cfg.hidden = 8;
  cfg.batch = 8;
  cfg.start_timesteps = 40;
  cfg.max_timesteps = 70;
  cfg.replay_capacity = 500;
  return cfg;
}

}  // namespace

TEST_CASE("critic target arithmetic") {
  td3::TD3Config cfg;
  cfg.gamma = 0.99;
  CHECK(td3::critic_target_value(-5.0, false, 0.1, 0.05, cfg) ==
        doctest::Approx(-5.0 + 0.99 * 0.05).epsilon(1e-15));
  CHECK(td3::critic_target_value(-5.0, true, 0.1, 0.05, cfg) == -5.0);
  // min is symmetric
  CHECK(td3::critic_target_value(0.0, false, 0.05, 0.1, cfg) ==
        td3::critic_target_value(0.0, false, 0.1, 0.05, cfg));
}

TEST_CASE("smoothed target action clips noise then the sum") {
  const rl::Action a{0.9, -0.9, 0.0};
  const rl::Action noise{2.0, -2.0, 0.1};
  const rl::Action out = td3::smoothed_target_action(a, noise, 0.5);
  CHECK(out[0] == 1.0);              // 0.9 + 0.5 clipped to 1
  CHECK(out[1] == -1.0);             // -0.9 - 0.5 clipped to -1
  CHECK(out[2] == doctest::Approx(0.1));
}

TEST_CASE("config validation") {
  td3::TD3Config cfg;
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.policy_delay = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("replay buffer is FIFO with uniform sampling") {
  td3::ReplayBuffer buf(3);
  for (int i = 0; i < 4; ++i) {
    td3::Transition t;
    t.r = i;
    buf.add(t);
  }
  CHECK(buf.size() == 3);
  std::mt19937_64 rng(1);
  bool saw_zero = false;
  for (int i = 0; i < 100; ++i) {
    const double r = buf.sample(rng).r;
    CHECK(r >= 1.0);  // the oldest transition was overwritten
    if (r == 0.0) saw_zero = true;
  }
  CHECK(!saw_zero);
}

TEST_CASE("dense net tape forward matches forward_row") {
  const td3::DenseNet net = td3::DenseNet::make({5, 7, 2}, true, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> x(5);
  for (double& v : x) v = d(rng);

  ad::Tape tape;
  const int xid = tape.input(ad::Tensor({1, 5}, x));
  const auto tn = net.forward(tape, xid);
  const std::vector<double> row = net.forward_row(x);
  const auto& tv = tape.value(tn.out).data;
  REQUIRE(tv.size() == row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    CHECK(tv[i] == doctest::Approx(row[i]).epsilon(1e-12));
  for (double v : row) CHECK(std::fabs(v) <= 1.0);  // tanh output head
}

TEST_CASE("adam first step moves by roughly lr in the gradient direction") {
  td3::DenseNet net = td3::DenseNet::make({1, 1}, false, 5);
  const double w0 = net.W[0][0];
  const double b0 = net.b[0][0];
  td3::Adam opt;
  opt.lr = 0.01;
  opt.init_like(net);
  opt.step(net, {{0.5}}, {{-0.5}});
  CHECK(net.W[0][0] == doctest::Approx(w0 - 0.01).epsilon(1e-4));
  CHECK(net.b[0][0] == doctest::Approx(b0 + 0.01).epsilon(1e-4));
}

TEST_CASE("select_action is bounded and deterministic without noise") {
  const td3::TD3Agent agent(tiny_cfg(), 9);
  std::mt19937_64 rng(2);
  const rl::EnvState s{1.0, 0.5, 2.0, 0.1, 0.9, 0.3, 0.5};
  const rl::Action a = agent.select_action(s, 0.0, rng);
  const rl::Action b = agent.select_action(s, 0.0, rng);
  CHECK(a == b);
  for (double v : a) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // with noise the actions are still clipped
  for (int i = 0; i < 50; ++i)
    for (double v : agent.select_action(s, 0.5, rng)) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("tied critics stay equal through critic-only updates") {
  // with critic2 = critic1 (and equal Adam state) TD3 degenerates to a
  // single-critic target; q1 == q2 must persist after an update
  td3::TD3Agent agent(tiny_cfg(), 10);
  agent.tie_critics_and_targets();
  td3::ReplayBuffer buf(100);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int i = 0; i < 50; ++i) {
    td3::Transition t;
    for (double& v : t.s) v = d(rng);
    for (double& v : t.a) v = d(rng);
    for (double& v : t.s2) v = d(rng);
    t.r = d(rng);
    t.done = (i % 7 == 0);
    buf.add(t);
  }
  agent.update(buf, rng);
  const rl::EnvState s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const rl::Action a{0.1, -0.2, 0.3};
  CHECK(agent.q1(s, a) == doctest::Approx(agent.q2(s, a)).epsilon(1e-12));
}

TEST_CASE("actor updates are delayed by policy_delay") {
  td3::TD3Config cfg = tiny_cfg();
  cfg.policy_delay = 2;
  td3::TD3Agent agent(cfg, 11);
  td3::ReplayBuffer buf(100);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int i = 0; i < 40; ++i) {
    td3::Transition t;
    for (double& v : t.s) v = d(rng);
    for (double& v : t.a) v = d(rng);
    for (double& v : t.s2) v = d(rng);
    t.r = d(rng);
    buf.add(t);
  }
  const auto w_before = agent.actor().W;
  agent.update(buf, rng);
  CHECK(agent.update_count() == 1);
  CHECK(agent.actor().W == w_before);  // first update: critics only
  agent.update(buf, rng);
  CHECK(agent.update_count() == 2);
  CHECK(agent.actor().W != w_before);  // second update moves the actor
  CHECK_THROWS_AS(agent.update(td3::ReplayBuffer(8), rng), std::invalid_argument);
}

TEST_CASE("agent checkpoint round-trips the policy") {
  td3::TD3Agent agent(tiny_cfg(), 12);
  const std::string path = "test_td3_agent.ckpt";
  agent.save(path);
  const td3::TD3Agent back = td3::TD3Agent::load(path);
  std::mt19937_64 rng(5);
  const rl::EnvState s{1.0, 1.0, 0.8, 1.2, 0.9, 0.88, 0.4};
  CHECK(agent.select_action(s, 0.0, rng) == back.select_action(s, 0.0, rng));
  CHECK(agent.q1(s, {0.1, 0.2, 0.3}) ==
        doctest::Approx(back.q1(s, {0.1, 0.2, 0.3})).epsilon(1e-15));
  std::remove(path.c_str());
}

TEST_CASE("train_agent produces a reproducible curve") {
  auto run = [] {
    rl::PanningEnv env(tiny_env());
    return td3::train_agent(env, tiny_cfg(), 31).curve;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(!a.empty());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].reward == b[i].reward);
    CHECK(a[i].steps == b[i].steps);
  }
  // episode boundaries are increasing step counts
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i].steps > a[i - 1].steps);
}

TEST_CASE("evaluate_policy returns one reward per episode") {
  rl::PanningEnv env(tiny_env());
  const auto r = td3::evaluate_policy(env, nullptr, 4, 17, 0.5);
  CHECK(r.size() == 4);
  const auto r2 = td3::evaluate_policy(env, nullptr, 4, 17, 0.5);
  CHECK(r == r2);
}

TEST_CASE("curve csv includes the penalty columns") {
  std::vector<td3::CurvePoint> curve(2);
  curve[0].episode = 1;
  curve[1].episode = 2;
  const std::string path = "test_td3_curve.csv";
  td3::write_curve_csv(curve, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "episode,steps,reward,mean_r1,mean_r2,mean_r3");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 2);
  std::remove(path.c_str());
}
