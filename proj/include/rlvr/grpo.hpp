#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlvr/policy.hpp"

namespace rlvr {

enum class Aggregation { kPerToken, kPerSequence };

// Weights and switches of the combined loss
//   L = L_pg + kl_coef * L_kl + entropy_coef * L_entropy.
// entropy_coef is negative by default, so minimizing the total maximizes
// per-token entropy.
struct LossConfig {
  double clip_eps = 0.2;
  double kl_coef = 0.001;
  double entropy_coef = -0.001;
  bool enable_pg = true;
  bool enable_kl = true;
  bool enable_entropy = true;
  Aggregation aggregation = Aggregation::kPerToken;

  void validate() const;
};

// G sampled responses for one prompt, with everything the loss needs.
struct RolloutGroup {
  std::string prompt_id;
  std::vector<int> prompt_ids;
  std::vector<TokenSequence> responses;            // G sequences
  std::vector<std::vector<double>> old_logprobs;   // per response, per token
  std::vector<double> rewards;                     // G values in {0,1}
  std::vector<double> advantages;                  // G values
  std::vector<std::vector<std::uint8_t>> masks;    // per response, per token

  int group_size() const { return static_cast<int>(responses.size()); }
};

// A_i = (r_i - mean(r)) / max(population std(r), 1e-6); all zeros when the
// rewards are constant. Throws for fewer than two rewards.
std::vector<double> compute_advantages(const std::vector<double>& rewards);

// Clipped surrogate for one group.
// Per-token mode: masked mean over each response's tokens, then mean over
// responses. Per-sequence mode: one ratio per response from masked log-prob
// sums, mean over responses.
double pg_loss(const std::vector<std::vector<double>>& new_logprobs,
               const std::vector<std::vector<double>>& old_logprobs,
               const std::vector<double>& advantages,
               const std::vector<std::vector<std::uint8_t>>& masks, double clip_eps,
               Aggregation aggregation);

// k3 estimator exp(ref - new) - (ref - new) - 1, masked mean over all tokens.
// Every per-token term is >= 0. Returns 0 when no token is masked.
double kl_loss(const std::vector<std::vector<double>>& new_logprobs,
               const std::vector<std::vector<double>>& ref_logprobs,
               const std::vector<std::vector<std::uint8_t>>& masks);

// Masked mean of token_entropy over all (response, position) pairs.
// Throws if no token is masked.
double entropy_loss(const std::vector<std::vector<std::vector<double>>>& logits,
                    const std::vector<std::vector<std::uint8_t>>& masks);

struct LossParts {
  double pg = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
};

// Weighted combination honoring the enable switches.
double total_loss(const LossParts& parts, const LossConfig& cfg);

// Total loss over a batch of groups, evaluated against the current policy.
// PG averages per group then over groups; KL and entropy are masked means
// over every response token in the batch. This is the scalar whose analytic
// gradient loss_gradients computes, and what the finite-difference oracle
// differentiates.
LossParts batch_loss_parts(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                           const PolicyParams& ref_params, const LossConfig& cfg);

double batch_loss(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                  const PolicyParams& ref_params, const LossConfig& cfg);

}  // namespace rlvr
