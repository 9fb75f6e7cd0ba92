#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "fd_check.hpp"
#include "rlvr/grad.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/rng.hpp"
#include "rlvr/vocab.hpp"

using namespace rlvr;
using rlvr::testing::FdInstance;
using rlvr::testing::FdReport;

namespace {

Vocab tiny_vocab(int letters) {
  std::vector<std::string> toks = {"<pad>", "<eos>"};
  for (int i = 0; i < letters; ++i) toks.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocab(std::move(toks), "<eos>");
}

// Random tiny instance: responses with stored old log-probs, binary rewards,
// group-normalized advantages, and a sprinkling of masked-out tokens.
FdInstance make_instance(std::uint64_t seed, int vocab_letters, int dim, int window, int group,
                         int max_resp_len) {
  FdInstance inst;
  Vocab v = tiny_vocab(vocab_letters);
  Rng rng = derive_stream(seed, {777});
  inst.params = random_init(v, dim, window, seed);
  // nearby but distinct snapshots so ratios stray from 1 and clipping fires
  inst.old_params = inst.params;
  for (double& x : inst.old_params.projection) x += rng.next_range(-0.3, 0.3);
  for (double& x : inst.old_params.bias) x += rng.next_range(-0.3, 0.3);
  inst.ref_params = random_init(v, dim, window, seed + 101);

  RolloutGroup g;
  g.prompt_id = "toy";
  int plen = 1 + static_cast<int>(rng.next_below(3));
  for (int i = 0; i < plen; ++i)
    g.prompt_ids.push_back(2 + static_cast<int>(rng.next_below(vocab_letters)));

  std::vector<double> rewards;
  for (int i = 0; i < group; ++i) {
    TokenSequence resp;
    int len = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_resp_len)));
    for (int t = 0; t < len; ++t)
      resp.ids.push_back(2 + static_cast<int>(rng.next_below(vocab_letters)));
    g.old_logprobs.push_back(logprob_response(inst.old_params, g.prompt_ids, resp.ids));
    std::vector<std::uint8_t> mask(resp.ids.size(), 1);
    if (resp.ids.size() > 1 && rng.next_below(3) == 0) mask[rng.next_below(mask.size())] = 0;
    g.masks.push_back(std::move(mask));
    g.responses.push_back(std::move(resp));
    // first two rewards pinned so the group is never constant
    rewards.push_back(i == 0 ? 1.0 : (i == 1 ? 0.0 : (rng.next_bool() ? 1.0 : 0.0)));
  }
  g.rewards = rewards;
  g.advantages = compute_advantages(rewards);
  inst.batch.push_back(std::move(g));
  return inst;
}

double grad_linf(const PolicyParams& g) {
  double worst = 0.0;
  for (auto* blk : {&g.embedding, &g.mixing, &g.projection, &g.bias})
    for (double x : *blk) worst = std::max(worst, std::abs(x));
  return worst;
}

LossConfig component_config(int which, Aggregation agg) {
  LossConfig cfg;
  cfg.aggregation = agg;
  cfg.enable_pg = which == 0;
  cfg.enable_kl = which == 1;
  cfg.enable_entropy = which == 2;
  // keep the weighted terms visible to finite differences
  cfg.kl_coef = 0.7;
  cfg.entropy_coef = -0.5;
  return cfg;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences per component") {
  // four components: per-token pg, per-sequence pg, kl, entropy
  struct Case {
    int which;
    Aggregation agg;
    const char* name;
  };
  const Case cases[] = {{0, Aggregation::kPerToken, "pg per-token"},
                        {0, Aggregation::kPerSequence, "pg per-sequence"},
                        {1, Aggregation::kPerToken, "kl"},
                        {2, Aggregation::kPerToken, "entropy"}};
  for (const Case& c : cases) {
    INFO("component: " << c.name);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      FdInstance inst = make_instance(seed, 5, 5, 3, 4, 4);
      LossConfig cfg = component_config(c.which, c.agg);
      PolicyParams analytic = loss_gradients(inst.params, inst.batch, inst.ref_params,
                                             inst.old_params, cfg);
      FdReport report = rlvr::testing::fd_compare(inst, analytic, cfg);
      CHECK(report.failed == 0);
      CHECK(report.compared > 0);
    }
  }
}

TEST_CASE("analytic gradients match finite differences for the full loss") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    FdInstance inst = make_instance(seed + 50, 6, 6, 3, 4, 4);
    for (Aggregation agg : {Aggregation::kPerToken, Aggregation::kPerSequence}) {
      LossConfig cfg;
      cfg.aggregation = agg;
      cfg.kl_coef = 0.4;
      cfg.entropy_coef = -0.3;
      LossParts parts;
      PolicyParams analytic =
          loss_gradients(inst.params, inst.batch, inst.ref_params, inst.old_params, cfg, &parts);
      FdReport report = rlvr::testing::fd_compare(inst, analytic, cfg);
      CHECK(report.failed == 0);

      // the by-product loss parts agree with the reference evaluation
      LossParts ref = batch_loss_parts(inst.params, inst.batch, inst.ref_params, cfg);
      CHECK(parts.pg == doctest::Approx(ref.pg).epsilon(1e-10));
      CHECK(parts.kl == doctest::Approx(ref.kl).epsilon(1e-10));
      CHECK(parts.entropy == doctest::Approx(ref.entropy).epsilon(1e-10));
    }
  }
}

TEST_CASE("disabled losses give an exactly zero gradient") {
  FdInstance inst = make_instance(3, 5, 4, 2, 4, 3);
  LossConfig off;
  off.enable_pg = off.enable_kl = off.enable_entropy = false;
  PolicyParams g = loss_gradients(inst.params, inst.batch, inst.ref_params, inst.old_params, off);
  CHECK(grad_linf(g) == 0.0);
}

TEST_CASE("zero advantages kill the pg gradient") {
  FdInstance inst = make_instance(4, 5, 4, 2, 4, 3);
  for (auto& g : inst.batch) {
    for (double& r : g.rewards) r = 1.0;
    g.advantages = compute_advantages(g.rewards);
  }
  LossConfig cfg;
  cfg.enable_kl = cfg.enable_entropy = false;
  PolicyParams g = loss_gradients(inst.params, inst.batch, inst.ref_params, inst.old_params, cfg);
  CHECK(grad_linf(g) == 0.0);
}

TEST_CASE("the clipped branch zeroes the pg gradient outside the band") {
  // single response, single token, ratio pushed outside [1-eps, 1+eps] with
  // the clipped branch active: the loss is locally constant
  Vocab v = tiny_vocab(4);
  FdInstance inst;
  inst.params = random_init(v, 4, 2, 9);
  inst.ref_params = inst.params;

  RolloutGroup g;
  g.prompt_id = "clip";
  g.prompt_ids = {2, 3};
  TokenSequence resp;
  resp.ids = {4};
  double new_lp = logprob_response(inst.params, g.prompt_ids, resp.ids)[0];
  // choose stored old log-probs to force rho = 1.5 (A > 0 makes clip active)
  g.old_logprobs.push_back({new_lp - std::log(1.5)});
  g.masks.push_back({1});
  g.responses.push_back(resp);
  // a second, fully masked-out response so G >= 2 without extra gradient
  TokenSequence filler;
  filler.ids = {5};
  g.old_logprobs.push_back({0.0});
  g.masks.push_back({0});
  g.responses.push_back(filler);
  g.rewards = {1.0, 0.0};
  g.advantages = {1.0, 0.0};
  inst.old_params = inst.params;
  inst.batch.push_back(g);

  LossConfig cfg;
  cfg.enable_kl = cfg.enable_entropy = false;
  PolicyParams analytic =
      loss_gradients(inst.params, inst.batch, inst.ref_params, inst.old_params, cfg);
  CHECK(grad_linf(analytic) == 0.0);
  PolicyParams numeric = rlvr::testing::fd_gradient(inst, cfg, 1e-5);
  CHECK(grad_linf(numeric) < 1e-9);

  // the unclipped side of the band keeps a live gradient
  inst.batch[0].old_logprobs[0][0] = new_lp - std::log(0.5);  // rho = 0.5, A > 0
  PolicyParams live =
      loss_gradients(inst.params, inst.batch, inst.ref_params, inst.old_params, cfg);
  CHECK(grad_linf(live) > 1e-6);
}

TEST_CASE("gradient rejects malformed input") {
  FdInstance inst = make_instance(6, 5, 4, 2, 4, 3);
  LossConfig cfg;
  CHECK_THROWS_AS(loss_gradients(inst.params, {}, inst.ref_params, inst.old_params, cfg),
                  std::invalid_argument);
  PolicyParams wrong = PolicyParams::zeros(inst.params.vocab_size, inst.params.dim + 1,
                                           inst.params.window);
  CHECK_THROWS_AS(loss_gradients(inst.params, inst.batch, wrong, inst.old_params, cfg),
                  std::invalid_argument);
}
