#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "panning/pruner.hpp"

using namespace panning;

namespace {

struct Fixture {
  model::NetworkSpec spec;
  model::Parameters params;
  data::Dataset data;
  metrics::BalancedBatch batch;
  metrics::EvalContext ctx;

  explicit Fixture(std::vector<int> dims = {2, 4, 2}, std::uint64_t seed = 3)
      : spec(model::NetworkSpec::mlp(dims)),
        params(model::init_params(spec, seed)),
        data(data::synthetic_classification(dims.back(), 10, dims.front(), seed)),
        batch(metrics::balanced_batch(data, dims.back(), 3, seed, false)),
        ctx(spec, params, batch) {}
};

// Brute-force connectivity oracle for dense chains: a kept weight is
// effective iff some kept path reaches it from the input and continues
// to an output.
double rho_e_oracle(const model::Mask& mask, const model::NetworkSpec& spec) {
  const std::size_t L = spec.layers.size();
  std::vector<std::vector<char>> fwd(L + 1), bwd(L + 1);
  fwd[0].assign(static_cast<std::size_t>(spec.layers[0].in), 1);
  for (std::size_t l = 0; l < L; ++l) {
    const int in = spec.layers[l].in, out = spec.layers[l].out;
    fwd[l + 1].assign(static_cast<std::size_t>(out), 0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += model::weight_counts(spec).per_layer[k];
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j)
        if (mask.keep[off + static_cast<std::size_t>(i * out + j)] != 0.0 &&
            fwd[l][static_cast<std::size_t>(i)])
          fwd[l + 1][static_cast<std::size_t>(j)] = 1;
  }
  bwd[L].assign(static_cast<std::size_t>(spec.layers[L - 1].out), 1);
  for (std::size_t l = L; l-- > 0;) {
    const int in = spec.layers[l].in, out = spec.layers[l].out;
    bwd[l].assign(static_cast<std::size_t>(in), 0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += model::weight_counts(spec).per_layer[k];
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j)
        if (mask.keep[off + static_cast<std::size_t>(i * out + j)] != 0.0 &&
            bwd[l + 1][static_cast<std::size_t>(j)])
          bwd[l][static_cast<std::size_t>(i)] = 1;
  }
  std::size_t effective = 0, off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const int in = spec.layers[l].in, out = spec.layers[l].out;
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j)
        if (mask.keep[off + static_cast<std::size_t>(i * out + j)] != 0.0 &&
            fwd[l][static_cast<std::size_t>(i)] && bwd[l + 1][static_cast<std::size_t>(j)])
          ++effective;
    off += static_cast<std::size_t>(in * out);
  }
  return 1.0 - static_cast<double>(effective) / static_cast<double>(mask.keep.size());
}

}  // namespace

TEST_CASE("schedule endpoint identities hold to machine precision") {
  for (double rho : {0.5, 0.9, 0.99, 0.999}) {
    for (int T : {1, 7, 100}) {
      CHECK(prune::schedule_ratio(0, T, rho) == 0.0);
      CHECK(prune::schedule_ratio(T, T, rho) == doctest::Approx(rho).epsilon(1e-15));
      for (int i = 1; i <= T; ++i)
        CHECK(prune::schedule_ratio(i, T, rho) >
              prune::schedule_ratio(i - 1, T, rho));
    }
  }
  CHECK(prune::schedule_ratio(50, 100, 0.99) ==
        doctest::Approx(1.0 - std::sqrt(0.01)).epsilon(1e-12));
}

TEST_CASE("band fusion lookup matches the published bands") {
  auto eq = [](const metrics::FusionWeights& a, double s, double n, double g) {
    CHECK(a.synflow == s);
    CHECK(a.snip == n);
    CHECK(a.grasp == g);
  };
  eq(prune::band_fusion(0.5), 0.2, 0.5, 0.3);
  eq(prune::band_fusion(0.8), 0.2, 0.5, 0.3);
  eq(prune::band_fusion(0.85), 0.2, 0.4, 0.4);
  eq(prune::band_fusion(0.9), 0.2, 0.4, 0.4);
  eq(prune::band_fusion(0.95), 0.2, 0.3, 0.5);
  eq(prune::band_fusion(0.98), 0.2, 0.3, 0.5);
  eq(prune::band_fusion(0.985), 0.4, 0.2, 0.4);
  eq(prune::band_fusion(0.99), 0.4, 0.2, 0.4);
  eq(prune::band_fusion(0.995), 0.5, 0.0, 0.5);
}

TEST_CASE("topk_mask hand example and tie-break") {
  const model::Mask m = prune::topk_mask({3, 9, 7, 1}, 0.5, 4);
  CHECK(m.keep == std::vector<double>{0, 1, 1, 0});
  // tie: lower flat index wins
  const model::Mask t = prune::topk_mask({5, 5, 5, 5}, 0.5, 4);
  CHECK(t.keep == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("topk_mask keep counts equal round(m(1-rho)) on 1000 random cases") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> rho_d(0.01, 0.999);
  std::uniform_real_distribution<double> s_d(-5.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng() % 300;
    const double rho = rho_d(rng);
    std::vector<double> scores(m);
    for (double& s : scores) s = s_d(rng);
    const auto want = static_cast<std::size_t>(
        std::llround(static_cast<double>(m) * (1.0 - rho)));
    if (want == 0) {
      CHECK_THROWS_AS(prune::topk_mask(scores, rho, m), std::invalid_argument);
    } else {
      CHECK(prune::topk_mask(scores, rho, m).count_kept() == want);
    }
  }
}

TEST_CASE("effective_compression matches the path-enumeration oracle") {
  const model::NetworkSpec spec = model::NetworkSpec::mlp({2, 4, 2});
  const model::Parameters params = model::init_params(spec, 5);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    model::Mask mask = model::Mask::ones(16);
    for (double& k : mask.keep) k = (rng() % 3 == 0) ? 0.0 : 1.0;
    CHECK(prune::effective_compression(mask, spec, params) ==
          doctest::Approx(rho_e_oracle(mask, spec)).epsilon(1e-12));
  }
}

TEST_CASE("an emptied layer makes every weight ineffective") {
  const model::NetworkSpec spec = model::NetworkSpec::mlp({3, 4, 2});
  const model::Parameters params = model::init_params(spec, 5);
  model::Mask mask = model::Mask::ones(20);
  for (std::size_t i = 12; i < 20; ++i) mask.keep[i] = 0.0;  // second layer gone
  CHECK(prune::effective_compression(mask, spec, params) == 1.0);
}

TEST_CASE("PanningRun steps reproduce the manual metric pipeline") {
  Fixture fx;
  const double rho = 0.6;
  const int T = 3;
  prune::PanningRun run(fx.ctx, rho, T);

  model::Mask mask = model::Mask::ones(16);
  const metrics::SaliencyScores syn =
      metrics::normalize(metrics::synflow_score(fx.spec, fx.params));
  for (int i = 1; i <= T; ++i) {
    const metrics::FusionWeights p{0.3, 0.4, 0.3};
    const metrics::SaliencyScores snip =
        metrics::normalize(metrics::snip_score(fx.ctx, mask));
    const metrics::SaliencyScores grasp = metrics::normalize(
        metrics::grasp_score(fx.ctx, mask, metrics::GraspVariant::Modified));
    const metrics::SaliencyScores fused = metrics::fuse(p, syn, snip, grasp);
    const double rho_i = prune::schedule_ratio(i, T, rho);
    mask = prune::topk_mask(fused.s, rho_i, 16);

    const prune::IterationRecord& rec = run.step(p);
    CHECK(rec.iter == i);
    CHECK(rec.rho_i == doctest::Approx(rho_i).epsilon(1e-15));
    CHECK(run.mask().keep == mask.keep);
    CHECK(rec.keep == mask.count_kept());
    CHECK(rec.rho_e ==
          doctest::Approx(prune::effective_compression(mask, fx.spec, fx.params))
              .epsilon(1e-12));
  }
  CHECK(run.finished());
  CHECK_THROWS_AS(run.step({1, 1, 1}), std::logic_error);
}

TEST_CASE("panning with Table 3 schedule uses the band of the new ratio") {
  Fixture fx({3, 6, 3}, 7);
  prune::PanningConfig cfg;
  cfg.rho_target = 0.9;
  cfg.T = 5;
  const prune::PanningResult res = prune::panning(fx.ctx, cfg);
  REQUIRE(res.trace.records.size() == 5);
  for (const prune::IterationRecord& rec : res.trace.records) {
    const metrics::FusionWeights want = prune::band_fusion(rec.rho_i);
    CHECK(rec.p.synflow == want.synflow);
    CHECK(rec.p.snip == want.snip);
    CHECK(rec.p.grasp == want.grasp);
  }
  CHECK(res.mask.count_kept() ==
        static_cast<std::size_t>(std::llround(36 * 0.1)));
}

TEST_CASE("fixed fusion schedule is honored") {
  Fixture fx({3, 6, 3}, 8);
  prune::PanningConfig cfg;
  cfg.rho_target = 0.8;
  cfg.T = 4;
  cfg.schedule = prune::PanningConfig::Schedule::Fixed;
  cfg.fixed_p = {0.5, 0.25, 0.25};
  const prune::PanningResult res = prune::panning(fx.ctx, cfg);
  for (const prune::IterationRecord& rec : res.trace.records)
    CHECK(rec.p.synflow == 0.5);
}

TEST_CASE("iterative pruning can resurrect previously removed weights") {
  // run several seeds; FORCE-style scoring at the masked point makes
  // resurrection overwhelmingly likely somewhere in the sweep
  bool resurrected = false;
  for (std::uint64_t seed = 0; seed < 6 && !resurrected; ++seed) {
    Fixture fx({4, 8, 3}, seed);
    prune::PanningRun run(fx.ctx, 0.85, 8);
    std::vector<double> prev = model::Mask::ones(run.weight_count()).keep;
    while (!run.finished()) {
      run.step({0.2, 0.5, 0.3});
      const std::vector<double>& cur = run.mask().keep;
      for (std::size_t i = 0; i < cur.size(); ++i)
        if (prev[i] == 0.0 && cur[i] == 1.0) resurrected = true;
      prev = cur;
    }
  }
  CHECK(resurrected);
}

TEST_CASE("single-metric runs prune to the target and record the trace") {
  Fixture fx({3, 6, 3}, 9);
  for (auto metric : {prune::SingleMetric::Snip, prune::SingleMetric::GraspOriginal,
                      prune::SingleMetric::GraspModified, prune::SingleMetric::Synflow}) {
    const prune::PanningResult res =
        prune::iterative_single_metric(fx.ctx, metric, 0.7, 3);
    CHECK(res.trace.records.size() == 3);
    CHECK(res.mask.count_kept() ==
          static_cast<std::size_t>(std::llround(36 * 0.3)));
  }
}

TEST_CASE("config validation rejects bad targets") {
  prune::PanningConfig cfg;
  cfg.rho_target = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rho_target = 0.9;
  cfg.T = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("trace writes one JSON line per iteration") {
  Fixture fx({3, 6, 3}, 10);
  prune::PanningConfig cfg;
  cfg.rho_target = 0.5;
  cfg.T = 4;
  const prune::PanningResult res = prune::panning(fx.ctx, cfg);
  const std::string path = "test_pruner_trace.jsonl";
  prune::write_trace_jsonl(res.trace, path);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("iter") == ++lines);
    CHECK(j.contains("rho_e"));
    CHECK(j.at("per_layer_kept").size() == 2);
  }
  CHECK(lines == 4);
  std::remove(path.c_str());
}
