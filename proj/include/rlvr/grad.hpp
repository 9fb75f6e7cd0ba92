#pragma once

#include "rlvr/grpo.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

// Analytic gradient of batch_loss with respect to every policy parameter.
// Old log-probs come from each group's stored rollout values; old_params is
// only consulted for groups that lack them. If parts_out is non-null the
// loss components are reported as a byproduct of the same pass.
PolicyParams loss_gradients(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                            const PolicyParams& ref_params, const PolicyParams& old_params,
                            const LossConfig& cfg, LossParts* parts_out = nullptr);

}  // namespace rlvr
