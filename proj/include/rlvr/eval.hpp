#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlvr/env.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

struct EvalReport {
  double pass1_avg_k = 0.0;           // mean over prompts of (correct / k)
  double pass_n = 0.0;                // fraction of prompts with >= 1 correct
  double boxed_ratio = 0.0;           // fraction of samples with a parseable answer
  double mean_response_length = 0.0;  // tokens
  std::map<std::string, int> reflection_counts;
  std::map<std::string, EvalReport> per_category;  // leaf reports, no recursion
  int prompts = 0;
  int samples_per_prompt = 0;
};

// Samples k responses per prompt at the given temperature (greedy decode
// when temperature == 0 and k == 1) and scores them with the outcome
// reward. Deterministic per seed: prompt p uses substream (seed, p).
EvalReport evaluate(const PolicyParams& params, const Vocab& vocab, const Dataset& dataset,
                    int k, double temperature, std::uint64_t seed, int max_len = 12);

extern const std::vector<std::string> kDefaultReflectionWords;

// Number of responses (not occurrences) containing each word,
// case-insensitive substring match.
std::map<std::string, int> count_reflection_words(
    const std::vector<std::string>& responses,
    const std::vector<std::string>& words = kDefaultReflectionWords);

struct PostSaturation {
  int saturation_step = 0;   // index into the aligned series
  int best_heldout_step = 0;
  double post_sat_gain = 0.0;
};

// Finds the first index whose trailing `window`-point mean train accuracy
// reaches the threshold (a full window is required), then reports how much
// the held-out series keeps improving past that point. nullopt if the train
// series never saturates.
std::optional<PostSaturation> detect_post_saturation(const std::vector<double>& train_acc,
                                                     const std::vector<double>& heldout_acc,
                                                     double sat_threshold = 0.99, int window = 5);

void save_report(const EvalReport& report, const std::string& path);

}  // namespace rlvr
