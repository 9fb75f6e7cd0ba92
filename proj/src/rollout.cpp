#include "rlvr/rollout.hpp"

#include <stdexcept>

#include "rlvr/verifier.hpp"

namespace rlvr {

void RolloutConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("rollout config: batch_size must be >= 1");
  if (group_size < 2) throw std::invalid_argument("rollout config: group_size must be >= 2");
  if (!(temperature > 0.0))
    throw std::invalid_argument("rollout config: temperature must be > 0");
  if (max_response_len < 1)
    throw std::invalid_argument("rollout config: max_response_len must be >= 1");
}

std::vector<PromptExample> build_batch(const Dataset& dataset, int batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("build_batch: empty dataset");
  const int n = static_cast<int>(dataset.size());
  std::vector<PromptExample> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  if (n >= batch_size) {
    std::vector<int> idx(dataset.size());
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < batch_size; ++i) {
      int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
      batch.push_back(dataset[idx[i]]);
    }
  } else {
    for (int i = 0; i < batch_size; ++i) batch.push_back(dataset[i % n]);
  }
  return batch;
}

std::vector<RolloutGroup> rollout_step(const PolicyParams& old_params, const Vocab& vocab,
                                       const std::vector<PromptExample>& batch,
                                       const RolloutConfig& cfg, std::uint64_t seed,
                                       std::uint64_t step) {
  cfg.validate();
  std::vector<RolloutGroup> groups;
  groups.reserve(batch.size());
  for (std::size_t p = 0; p < batch.size(); ++p) {
    const PromptExample& ex = batch[p];
    RolloutGroup group;
    group.prompt_id = ex.id;
    group.prompt_ids = vocab.encode(ex.prompt);

    Rng rng = derive_stream(seed, {kStreamRollout, step, static_cast<std::uint64_t>(p)});
    for (int i = 0; i < cfg.group_size; ++i) {
      TokenSequence resp =
          sample_response(old_params, group.prompt_ids, cfg.temperature, cfg.max_response_len, rng);
      std::string text = vocab.decode(resp.ids);
      double reward = cfg.reward_mode == RewardMode::kOutcome
                          ? outcome_reward(text, ex.label)
                          : format_reward(text);
      group.old_logprobs.push_back(resp.logprobs);
      group.masks.emplace_back(resp.ids.size(), 1);
      group.responses.push_back(std::move(resp));
      group.rewards.push_back(reward);
    }
    group.advantages = compute_advantages(group.rewards);
    groups.push_back(std::move(group));
  }
  return groups;
}

PolicyParams snapshot_policy(const PolicyParams& params) { return params; }

double batch_train_accuracy(const std::vector<RolloutGroup>& groups) {
  double sum = 0.0;
  long n = 0;
  for (const auto& g : groups)
    for (double r : g.rewards) {
      sum += r;
      ++n;
    }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

double mean_response_length(const std::vector<RolloutGroup>& groups) {
  double sum = 0.0;
  long n = 0;
  for (const auto& g : groups)
    for (const auto& r : g.responses) {
      sum += static_cast<double>(r.ids.size());
      ++n;
    }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace rlvr
