#pragma once

#include <cstdint>
#include <vector>

#include "rlvr/env.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

enum class RewardMode { kOutcome, kFormat };

struct RolloutConfig {
  int batch_size = 128;
  int group_size = 8;
  double temperature = 0.6;
  int max_response_len = 12;
  RewardMode reward_mode = RewardMode::kOutcome;

  void validate() const;
};

// Fills a training batch from the dataset: a uniform shuffle-draw without
// replacement when the dataset is large enough, otherwise cyclic duplication
// until the batch is full (the few-shot duplication rule).
std::vector<PromptExample> build_batch(const Dataset& dataset, int batch_size, Rng& rng);

// Samples G responses per prompt from the frozen old policy, scores them
// with the configured reward, and attaches group-normalized advantages.
// Reproducible: prompt p at step s uses substream (seed, step, p).
std::vector<RolloutGroup> rollout_step(const PolicyParams& old_params, const Vocab& vocab,
                                       const std::vector<PromptExample>& batch,
                                       const RolloutConfig& cfg, std::uint64_t seed,
                                       std::uint64_t step);

// Deep copy; the snapshot is value-independent of the original.
PolicyParams snapshot_policy(const PolicyParams& params);

// (sum of rewards) / (batch_size * G)
double batch_train_accuracy(const std::vector<RolloutGroup>& groups);

double mean_response_length(const std::vector<RolloutGroup>& groups);

}  // namespace rlvr
