#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlvr/env.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rollout.hpp"
#include "rlvr/selection.hpp"

namespace rlvr {

struct TrainConfig {
  int steps = 100;
  int mini_batches_per_rollout = 8;
  double learning_rate = 1e-3;  // toy-scale default; set 1e-6 to match large-model runs
  double weight_decay = 0.01;
  bool enable_weight_decay = true;
  LossConfig loss;
  RolloutConfig rollout;
  std::uint64_t seed = 0;
  int checkpoint_every = 20;
  double label_error_rate = 0.0;

  void validate() const;
};

// Switches mirroring the loss-ablation grid plus label surgery.
struct AblationFlags {
  bool no_pg = false;
  bool no_kl = false;
  bool no_entropy = false;
  bool no_weight_decay = false;
  std::optional<double> entropy_coef_override;
  bool format_reward_mode = false;
  std::optional<std::string> label_override;
};

// Returns config with the corresponding switches applied; throws on
// contradictions (an entropy coefficient override together with no_entropy).
TrainConfig apply_ablation(const TrainConfig& config, const AblationFlags& flags);

// Replaces every label in the dataset (the label-alteration experiments).
Dataset apply_label_override(const Dataset& dataset, const std::string& label);

// Decoupled-weight-decay Adam state over the policy's parameter blocks.
struct AdamState {
  PolicyParams m;
  PolicyParams v;
  std::uint64_t t = 0;

  static AdamState zeros(const PolicyParams& shape);
};

// One update: params *= (1 - lr*wd) when decay is enabled, then the
// bias-corrected adaptive step with beta1=0.9, beta2=0.999, eps=1e-8.
// Throws on non-finite gradients.
void optimizer_step(PolicyParams& params, const PolicyParams& grads, double lr,
                    double weight_decay, bool enable_wd, AdamState& state);

struct MetricsRecord {
  int step = 0;
  double train_accuracy = 0.0;
  double pg_loss = 0.0;
  double kl_loss = 0.0;
  double entropy_loss = 0.0;
  double total_loss = 0.0;
  double mean_response_length = 0.0;
  std::string checkpoint;  // relative file name, empty if none this step

  std::string to_json_line() const;
  static MetricsRecord from_json_line(const std::string& line);
};

// Everything needed to continue a run mid-stream.
struct TrainState {
  PolicyParams params;
  PolicyParams ref_params;
  AdamState opt;
  int next_step = 0;
};

void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

struct TrainResult {
  PolicyParams final_params;
  PolicyParams ref_params;
  std::vector<MetricsRecord> metrics;
  std::map<std::string, std::vector<double>> accuracy_history;  // per example, per epoch
  std::vector<std::string> checkpoint_files;                    // relative names
};

using StepObserver = std::function<void(int step, const PolicyParams& params)>;

// The full RLVR loop. Per step: snapshot the old policy, build a batch,
// roll out G responses per prompt, then run mini_batches_per_rollout
// gradient updates against the snapshot, with KL measured against the
// frozen step-0 reference. checkpoint_dir may be empty to skip checkpoints.
// Label corruption (label_error_rate) is applied once, up front, seeded.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const PolicyParams& initial_params, const std::string& checkpoint_dir = "",
                  const StepObserver& observer = nullptr);

// Continues an interrupted run; reproduces the uninterrupted run's metrics
// for the remaining steps given the same config and dataset.
TrainResult resume_train(const TrainConfig& config, const Dataset& dataset, TrainState state,
                         const std::string& checkpoint_dir = "",
                         const StepObserver& observer = nullptr);

}  // namespace rlvr
