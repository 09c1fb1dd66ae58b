#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "panning/checkpoint.hpp"
#include "panning/config.hpp"
#include "panning/data.hpp"
#include "panning/metrics.hpp"
#include "panning/model.hpp"
#include "panning/pruner.hpp"
#include "panning/rl_env.hpp"
#include "panning/rng.hpp"
#include "panning/td3.hpp"
#include "panning/trainer.hpp"

namespace fs = std::filesystem;
using namespace panning;

namespace {

struct CliArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string data_root;
  std::string out_dir;
  std::string checkpoint;  // input checkpoint for train/eval/rl-prune
  long seed = -1;
};

config::KeyValues load_kv(const CliArgs& args) {
  config::KeyValues kv;
  if (!args.config_path.empty()) kv.load_file(args.config_path);
  for (std::size_t i = 0; i < args.overrides.size(); ++i)
    kv.parse_line(args.overrides[i], "--set", static_cast<int>(i + 1));
  if (!args.data_root.empty()) kv.set("data.root", args.data_root);
  if (!args.out_dir.empty()) kv.set("run.out", args.out_dir);
  if (args.seed >= 0) kv.set("run.seed", std::to_string(args.seed));
  return kv;
}

void default_key(config::KeyValues& kv, const std::string& k, const std::string& v) {
  if (!kv.has(k)) kv.set(k, v);
}

std::string dataset_root(const config::KeyValues& kv) {
  if (kv.has("data.root")) return kv.get("data.root", "");
  if (const char* env = std::getenv("PANNING_DATA_ROOT")) return env;
  return "data/mnist";
}

void resolve_data_defaults(config::KeyValues& kv) {
  default_key(kv, "data.dataset", "mnist");
  default_key(kv, "data.root", dataset_root(kv));
  default_key(kv, "data.train_subset", "0");  // 0 = full training split
  if (kv.get("data.dataset", "") == "synthetic") {
    default_key(kv, "data.classes", "4");
    default_key(kv, "data.per_class", "50");
    default_key(kv, "data.dims", "16");
    default_key(kv, "data.seed", "7");
  }
}

void resolve_model_defaults(config::KeyValues& kv) {
  default_key(kv, "model.name", "lenet5");
  if (kv.get("model.name", "") == "mlp") default_key(kv, "model.dims", "784,300,100,10");
}

struct Loaded {
  model::NetworkSpec spec;
  data::Dataset train, test;
  bool conv_layout = false;
};

Loaded load_experiment(config::KeyValues& kv) {
  resolve_data_defaults(kv);
  resolve_model_defaults(kv);
  Loaded out;

  const std::string ds = kv.get("data.dataset", "mnist");
  if (ds == "mnist") {
    auto [train, test] = data::load_mnist(kv.get("data.root", ""));
    out.train = std::move(train);
    out.test = std::move(test);
  } else if (ds == "synthetic") {
    const int classes = static_cast<int>(kv.get_long("data.classes", 4));
    const int per_class = static_cast<int>(kv.get_long("data.per_class", 50));
    const int dims = static_cast<int>(kv.get_long("data.dims", 16));
    const std::uint64_t seed = kv.get_u64("data.seed", 7);
    out.train = data::synthetic_classification(classes, per_class, dims, seed);
    out.test = data::synthetic_classification(classes, std::max(per_class / 4, 2),
                                              dims, derive_seed(seed, 1));
  } else {
    throw std::runtime_error("data.dataset must be mnist or synthetic, got " + ds);
  }

  const long subset = kv.get_long("data.train_subset", 0);
  if (subset > 0 && static_cast<std::size_t>(subset) < out.train.size()) {
    out.train.images.resize(static_cast<std::size_t>(subset) * out.train.sample_dim());
    out.train.labels.resize(static_cast<std::size_t>(subset));
  }

  const std::string name = kv.get("model.name", "lenet5");
  if (name == "lenet5") {
    out.spec = model::NetworkSpec::lenet5();
    out.conv_layout = true;
  } else if (name == "mlp") {
    out.spec = model::NetworkSpec::mlp(kv.get_ints("model.dims"));
    out.conv_layout = false;
  } else {
    throw std::runtime_error("model.name must be lenet5 or mlp, got " + name);
  }
  out.spec.validate();
  return out;
}

fs::path ensure_out(const config::KeyValues& kv) {
  const fs::path out = kv.get("run.out", "out");
  fs::create_directories(out);
  return out;
}

void write_resolved(const config::KeyValues& kv, const fs::path& out) {
  kv.write_file((out / "config.resolved").string());
}

ckpt::Checkpoint make_model_ckpt(const model::NetworkSpec& spec,
                                 const model::Parameters& params,
                                 const model::Mask& mask) {
  ckpt::Checkpoint c;
  c.spec_json = spec.to_json();
  c.set("weights", params.weights);
  c.set("biases", params.biases);
  c.set("mask", mask.keep);
  return c;
}

struct ModelCkpt {
  model::NetworkSpec spec;
  model::Parameters params;
  model::Mask mask;
};

ModelCkpt load_model_ckpt(const std::string& path) {
  const ckpt::Checkpoint c = ckpt::load(path);
  ModelCkpt out;
  out.spec = model::NetworkSpec::from_json(c.spec_json);
  out.spec.validate();
  const auto* w = c.find("weights");
  const auto* b = c.find("biases");
  if (!w || !b) throw std::runtime_error("checkpoint " + path + ": missing weights/biases");
  const model::WeightCounts wc = model::weight_counts(out.spec);
  if (w->size() != wc.total)
    throw std::runtime_error("checkpoint " + path + ": weight count mismatch");
  out.params = model::init_params(out.spec, 0);
  out.params.weights = *w;
  out.params.biases = *b;
  const auto* m = c.find("mask");
  out.mask = m ? model::Mask{*m} : model::Mask::ones(w->size());
  if (out.mask.keep.size() != w->size())
    throw std::runtime_error("checkpoint " + path + ": mask size mismatch");
  return out;
}

void print_retention(const model::NetworkSpec& spec, const model::Mask& mask,
                     const model::Parameters& params) {
  const model::WeightCounts wc = model::weight_counts(spec);
  const std::vector<std::size_t> kept = prune::per_layer_kept(mask, spec);
  std::cout << "layer  kept/total  retention\n";
  for (std::size_t l = 0; l < kept.size(); ++l)
    std::cout << l << "  " << kept[l] << "/" << wc.per_layer[l] << "  "
              << static_cast<double>(kept[l]) / static_cast<double>(wc.per_layer[l])
              << "\n";
  const double rho_e = prune::effective_compression(mask, spec, params);
  std::cout << "kept total: " << mask.count_kept() << "/" << wc.total << "\n";
  std::cout << "rho_e: " << rho_e << "\n";
}

void resolve_prune_defaults(config::KeyValues& kv) {
  default_key(kv, "run.seed", "0");
  default_key(kv, "run.out", "out");
  default_key(kv, "panning.method", "panning");
  default_key(kv, "panning.rho", "0.9");
  default_key(kv, "panning.T", "100");
  default_key(kv, "panning.batch_per_class", "10");
}

int cmd_rl_prune(config::KeyValues kv);

int cmd_prune(config::KeyValues kv) {
  resolve_prune_defaults(kv);
  const std::string method = kv.get("panning.method", "panning");
  if (method == "rl") return cmd_rl_prune(std::move(kv));

  Loaded exp = load_experiment(kv);
  const fs::path out = ensure_out(kv);
  const std::uint64_t seed = kv.get_u64("run.seed", 0);
  const double rho = kv.get_double("panning.rho", 0.9);
  const int T = static_cast<int>(kv.get_long("panning.T", 100));

  model::Parameters params = model::init_params(exp.spec, derive_seed(seed, 0x9a));
  metrics::BalancedBatch batch = metrics::balanced_batch(
      exp.train, exp.train.classes,
      static_cast<int>(kv.get_long("panning.batch_per_class", 10)),
      derive_seed(seed, 0xb7), exp.conv_layout);
  metrics::EvalContext ctx(exp.spec, params, std::move(batch));

  prune::PanningResult result;
  if (method == "panning") {
    prune::PanningConfig cfg;
    cfg.rho_target = rho;
    cfg.T = T;
    const std::vector<double> p = kv.get_doubles("panning.fixed_p");
    if (!p.empty()) {
      if (p.size() != 3) throw std::runtime_error("panning.fixed_p needs 3 values");
      cfg.schedule = prune::PanningConfig::Schedule::Fixed;
      cfg.fixed_p = {p[0], p[1], p[2]};
    }
    result = prune::panning(ctx, cfg);
  } else {
    prune::SingleMetric metric;
    if (method == "snip") metric = prune::SingleMetric::Snip;
    else if (method == "grasp") metric = prune::SingleMetric::GraspOriginal;
    else if (method == "grasp_mod") metric = prune::SingleMetric::GraspModified;
    else if (method == "synflow") metric = prune::SingleMetric::Synflow;
    else throw std::runtime_error("unknown panning.method: " + method);
    result = prune::iterative_single_metric(ctx, metric, rho, T);
  }

  ckpt::save(make_model_ckpt(exp.spec, params, result.mask),
             (out / "mask.ckpt").string());
  prune::write_trace_jsonl(result.trace, (out / "trace.jsonl").string());
  write_resolved(kv, out);
  print_retention(exp.spec, result.mask, params);
  return 0;
}

int cmd_train(config::KeyValues kv, const std::string& checkpoint) {
  default_key(kv, "run.seed", "0");
  default_key(kv, "run.out", "out");
  default_key(kv, "train.epochs", "80");
  default_key(kv, "train.batch", "256");
  default_key(kv, "train.momentum", "0.9");
  default_key(kv, "train.lr0", "0.1");
  default_key(kv, "train.weight_decay", "1e-4");
  if (!checkpoint.empty()) kv.set("train.checkpoint", checkpoint);

  Loaded exp = load_experiment(kv);
  const fs::path out = ensure_out(kv);
  const std::uint64_t seed = kv.get_u64("run.seed", 0);

  model::NetworkSpec spec = exp.spec;
  model::Parameters params;
  model::Mask mask;
  const std::string ckpath = kv.get("train.checkpoint", "");
  if (!ckpath.empty()) {
    ModelCkpt mc = load_model_ckpt(ckpath);
    spec = std::move(mc.spec);
    params = std::move(mc.params);
    mask = std::move(mc.mask);
  } else {
    // dense baseline straight from init
    params = model::init_params(spec, derive_seed(seed, 0x9a));
    mask = model::Mask::ones(params.weights.size());
  }

  train::TrainConfig cfg;
  cfg.epochs = static_cast<int>(kv.get_long("train.epochs", 80));
  cfg.batch = static_cast<int>(kv.get_long("train.batch", 256));
  cfg.momentum = kv.get_double("train.momentum", 0.9);
  cfg.lr0 = kv.get_double("train.lr0", 0.1);
  cfg.weight_decay = kv.get_double("train.weight_decay", 1e-4);
  cfg.seed = derive_seed(seed, 0x7a11);
  cfg.conv_layout = exp.conv_layout;

  const train::TrainResult tr =
      train::train_sparse(spec, params, mask, exp.train, &exp.test, cfg);
  ckpt::save(make_model_ckpt(spec, tr.params, mask), (out / "trained.ckpt").string());
  train::write_metrics_csv(tr.history, (out / "metrics.csv").string());
  write_resolved(kv, out);

  const double acc = tr.history.empty()
                         ? train::evaluate(spec, tr.params, mask, exp.test,
                                           exp.conv_layout, cfg.batch)
                         : tr.history.back().test_acc;
  std::cout << "final test accuracy: " << acc << "\n";
  std::ofstream(out / "final_accuracy.txt") << acc << "\n";
  return 0;
}

int cmd_eval(config::KeyValues kv, const std::string& checkpoint) {
  if (checkpoint.empty()) throw std::runtime_error("eval: --checkpoint required");
  Loaded exp = load_experiment(kv);
  const ModelCkpt mc = load_model_ckpt(checkpoint);
  const bool conv = mc.spec.conv_input();
  const double acc =
      train::evaluate(mc.spec, mc.params, mc.mask, exp.test, conv,
                      static_cast<int>(kv.get_long("train.batch", 256)));
  std::cout << "test accuracy: " << acc << "\n";
  return 0;
}

void resolve_env_defaults(config::KeyValues& kv) {
  default_key(kv, "env.model_dims", "16,12,4");
  default_key(kv, "env.T", "20");
  default_key(kv, "env.alpha", "100");
  default_key(kv, "env.batch_per_class", "2");
  default_key(kv, "env.rho_min", "0.80");
  default_key(kv, "env.rho_max", "0.9999");
  default_key(kv, "env.high_cut", "0.99");
  default_key(kv, "env.base_high_prob", "0.1");
  default_key(kv, "env.curriculum_gain", "0.6");
  default_key(kv, "env.target", "mlp");  // mlp (synthetic data) | lenet5 (mnist)
}

rl::EnvConfig make_env_config(config::KeyValues& kv) {
  resolve_env_defaults(kv);
  rl::EnvConfig ec;
  if (kv.get("env.target", "mlp") == "lenet5") {
    kv.set("data.dataset", "mnist");
    kv.set("model.name", "lenet5");
    Loaded exp = load_experiment(kv);
    ec.spec = std::move(exp.spec);
    ec.dataset = std::move(exp.train);
    ec.conv_layout = true;
  } else {
    kv.set("data.dataset", "synthetic");
    const std::vector<int> dims = kv.get_ints("env.model_dims");
    kv.set("data.classes", std::to_string(dims.back()));
    kv.set("data.dims", std::to_string(dims.front()));
    Loaded exp = load_experiment(kv);
    ec.spec = model::NetworkSpec::mlp(dims);
    ec.dataset = std::move(exp.train);
    ec.conv_layout = false;
  }
  ec.T = static_cast<int>(kv.get_long("env.T", 20));
  ec.alpha = kv.get_double("env.alpha", 100);
  ec.batch_per_class = static_cast<int>(kv.get_long("env.batch_per_class", 2));
  ec.rho_min = kv.get_double("env.rho_min", 0.80);
  ec.rho_max = kv.get_double("env.rho_max", 0.9999);
  ec.high_cut = kv.get_double("env.high_cut", 0.99);
  ec.base_high_prob = kv.get_double("env.base_high_prob", 0.1);
  ec.curriculum_gain = kv.get_double("env.curriculum_gain", 0.6);
  return ec;
}

td3::TD3Config make_td3_config(config::KeyValues& kv) {
  default_key(kv, "td3.lr", "3e-4");
  default_key(kv, "td3.start_timesteps", "2000");
  default_key(kv, "td3.max_timesteps", "200000");
  default_key(kv, "td3.batch", "256");
  default_key(kv, "td3.expl_noise", "0.1");
  default_key(kv, "td3.gamma", "0.99");
  default_key(kv, "td3.tau", "0.01");
  default_key(kv, "td3.policy_noise", "0.2");
  default_key(kv, "td3.noise_clip", "0.5");
  default_key(kv, "td3.policy_delay", "2");
  default_key(kv, "td3.replay", "100000");
  default_key(kv, "td3.hidden", "256");
  td3::TD3Config cfg;
  cfg.lr = kv.get_double("td3.lr", 3e-4);
  cfg.start_timesteps = static_cast<int>(kv.get_long("td3.start_timesteps", 2000));
  cfg.max_timesteps = static_cast<int>(kv.get_long("td3.max_timesteps", 200000));
  cfg.batch = static_cast<int>(kv.get_long("td3.batch", 256));
  cfg.expl_noise = kv.get_double("td3.expl_noise", 0.1);
  cfg.gamma = kv.get_double("td3.gamma", 0.99);
  cfg.tau = kv.get_double("td3.tau", 0.01);
  cfg.policy_noise = kv.get_double("td3.policy_noise", 0.2);
  cfg.noise_clip = kv.get_double("td3.noise_clip", 0.5);
  cfg.policy_delay = static_cast<int>(kv.get_long("td3.policy_delay", 2));
  cfg.replay_capacity = static_cast<std::size_t>(kv.get_long("td3.replay", 100000));
  cfg.hidden = static_cast<int>(kv.get_long("td3.hidden", 256));
  return cfg;
}

int cmd_rl_train(config::KeyValues kv) {
  default_key(kv, "run.seed", "0");
  default_key(kv, "run.out", "out");
  default_key(kv, "td3.eval_episodes", "20");
  rl::EnvConfig ec = make_env_config(kv);
  const td3::TD3Config cfg = make_td3_config(kv);
  const fs::path out = ensure_out(kv);
  const std::uint64_t seed = kv.get_u64("run.seed", 0);

  rl::PanningEnv env(ec);
  td3::TrainResult result = td3::train_agent(env, cfg, seed);
  result.agent.save((out / "agent.ckpt").string());
  td3::write_curve_csv(result.curve, (out / "curve.csv").string());
  write_resolved(kv, out);

  const int eps = static_cast<int>(kv.get_long("td3.eval_episodes", 20));
  rl::PanningEnv eval_env(ec);
  const std::vector<double> agent_r =
      td3::evaluate_policy(eval_env, &result.agent, eps, derive_seed(seed, 0xe0), 1.0);
  const std::vector<double> random_r =
      td3::evaluate_policy(eval_env, nullptr, eps, derive_seed(seed, 0xe0), 1.0);
  const double am = std::accumulate(agent_r.begin(), agent_r.end(), 0.0) / eps;
  const double rm = std::accumulate(random_r.begin(), random_r.end(), 0.0) / eps;
  std::cout << "episodes: " << result.curve.size() << "\n";
  std::cout << "agent mean reward: " << am << "\n";
  std::cout << "random mean reward: " << rm << "\n";
  return 0;
}

int cmd_rl_prune(config::KeyValues kv) {
  default_key(kv, "run.seed", "0");
  default_key(kv, "run.out", "out");
  default_key(kv, "panning.rho", "0.9");
  const std::string agent_path = kv.get("panning.agent", "");
  if (agent_path.empty()) throw std::runtime_error("rl-prune: panning.agent required");

  rl::EnvConfig ec = make_env_config(kv);
  ec.fixed_rho = kv.get_double("panning.rho", 0.9);
  if (kv.has("panning.T")) ec.T = static_cast<int>(kv.get_long("panning.T", 20));
  const fs::path out = ensure_out(kv);
  const std::uint64_t seed = kv.get_u64("run.seed", 0);

  td3::TD3Agent agent = td3::TD3Agent::load(agent_path);
  rl::PanningEnv env(ec);
  rl::EpisodeLogger logger((out / "episode.jsonl").string());
  std::mt19937_64 rng = make_rng(seed, 0xac7);
  rl::EnvState s = env.reset(seed, 1.0);
  int t = 0;
  while (!env.done()) {
    const rl::Action a = agent.select_action(s, 0.0, rng);
    const rl::StepResult res = env.step(a);
    logger.log(++t, s, a, res);
    s = res.state;
  }

  const model::Parameters params =
      model::init_params(ec.spec, derive_seed(seed, 0x9a));
  ckpt::save(make_model_ckpt(ec.spec, params, env.mask()),
             (out / "mask.ckpt").string());
  prune::write_trace_jsonl(env.trace(), (out / "trace.jsonl").string());
  write_resolved(kv, out);
  print_retention(ec.spec, env.mask(), params);
  return 0;
}

int cmd_trace_scores(config::KeyValues kv) {
  default_key(kv, "run.seed", "0");
  default_key(kv, "run.out", "out");
  default_key(kv, "trace.metric", "snip");
  default_key(kv, "trace.stride", "500");
  default_key(kv, "panning.rho", "0.9");
  default_key(kv, "panning.T", "10");
  default_key(kv, "panning.batch_per_class", "10");

  Loaded exp = load_experiment(kv);
  const fs::path out = ensure_out(kv);
  const std::uint64_t seed = kv.get_u64("run.seed", 0);
  const double rho = kv.get_double("panning.rho", 0.9);
  const int T = static_cast<int>(kv.get_long("panning.T", 10));
  const long stride = kv.get_long("trace.stride", 500);
  const std::string metric = kv.get("trace.metric", "snip");

  model::Parameters params = model::init_params(exp.spec, derive_seed(seed, 0x9a));
  metrics::BalancedBatch batch = metrics::balanced_batch(
      exp.train, exp.train.classes,
      static_cast<int>(kv.get_long("panning.batch_per_class", 10)),
      derive_seed(seed, 0xb7), exp.conv_layout);
  metrics::EvalContext ctx(exp.spec, params, std::move(batch));

  const std::size_t m = params.weights.size();
  model::Mask mask = model::Mask::ones(m);
  std::vector<std::size_t> cols;  // subsampled first-iteration ordering
  std::ofstream f(out / "scores.csv");
  if (!f) throw std::runtime_error("cannot open scores.csv");

  for (int i = 1; i <= T; ++i) {
    std::vector<double> s;
    if (metric == "snip") s = metrics::snip_score(ctx, mask).s;
    else if (metric == "grasp") s = metrics::grasp_score(ctx, mask, metrics::GraspVariant::Modified).s;
    else if (metric == "synflow") s = metrics::synflow_score(exp.spec, params).s;
    else throw std::runtime_error("trace.metric must be snip, grasp or synflow");

    if (i == 1) {
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&s](std::size_t a, std::size_t b) {
        return s[a] > s[b];
      });
      for (std::size_t j = 0; j < m; j += static_cast<std::size_t>(stride))
        cols.push_back(order[j]);
      f << "iter,rho_i";
      for (std::size_t c : cols) f << ",w" << c;
      f << "\n";
    }
    const double rho_i = prune::schedule_ratio(i, T, rho);
    f << i << ',' << rho_i;
    for (std::size_t c : cols) f << ',' << s[c];
    f << "\n";
    mask = prune::topk_mask(s, rho_i, m);
  }
  write_resolved(kv, out);
  std::cout << "wrote " << (out / "scores.csv").string() << " (" << cols.size()
            << " columns, " << T << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-network screening experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  CliArgs args;
  app.add_option("--config", args.config_path, "key=value config file");
  app.add_option("--set", args.overrides, "override a config key (key=value)");
  app.add_option("--data-root", args.data_root, "dataset root (or $PANNING_DATA_ROOT)");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--seed", args.seed, "root seed for the run");

  auto* prune_cmd = app.add_subcommand("prune", "screen a sparse mask before training");
  auto* train_cmd = app.add_subcommand("train", "train a (masked) network");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* rl_train_cmd = app.add_subcommand("rl-train", "train the TD3 pruning agent");
  auto* rl_prune_cmd = app.add_subcommand("rl-prune", "prune with a trained agent");
  auto* trace_cmd = app.add_subcommand("trace-scores", "dump per-iteration score trajectories");

  std::string checkpoint;
  train_cmd->add_option("--checkpoint", checkpoint, "mask checkpoint to start from");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");

  CLI11_PARSE(app, argc, argv);

  try {
    config::KeyValues kv = load_kv(args);
    if (prune_cmd->parsed()) return cmd_prune(std::move(kv));
    if (train_cmd->parsed()) return cmd_train(std::move(kv), checkpoint);
    if (eval_cmd->parsed()) return cmd_eval(std::move(kv), checkpoint);
    if (rl_train_cmd->parsed()) return cmd_rl_train(std::move(kv));
    if (rl_prune_cmd->parsed()) return cmd_rl_prune(std::move(kv));
    if (trace_cmd->parsed()) return cmd_trace_scores(std::move(kv));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
