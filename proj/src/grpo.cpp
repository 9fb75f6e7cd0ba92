#include "rlvr/grpo.hpp"

#include <cmath>
#include <stdexcept>

namespace rlvr {

void LossConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0))
    throw std::invalid_argument("loss config: clip_eps must be in (0, 1)");
  if (kl_coef < 0.0) throw std::invalid_argument("loss config: kl_coef must be >= 0");
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("compute_advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  double std = std::sqrt(var);
  std::vector<double> adv(g, 0.0);
  if (std == 0.0) return adv;
  // The 1e-6 guard only floors the denominator; above it the advantages are
  // exactly standardized (population std of A is 1), which the saturated
  // zero-variance branch above already protects.
  double denom = std > 1e-6 ? std : 1e-6;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

namespace {

void check_parallel(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b,
                    const std::vector<std::vector<std::uint8_t>>& masks, const char* where) {
  if (a.size() != b.size() || a.size() != masks.size())
    throw std::invalid_argument(std::string(where) + ": response count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size() || a[i].size() != masks[i].size())
      throw std::invalid_argument(std::string(where) + ": token count mismatch");
}

double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

double pg_loss(const std::vector<std::vector<double>>& new_logprobs,
               const std::vector<std::vector<double>>& old_logprobs,
               const std::vector<double>& advantages,
               const std::vector<std::vector<std::uint8_t>>& masks, double clip_eps,
               Aggregation aggregation) {
  check_parallel(new_logprobs, old_logprobs, masks, "pg_loss");
  if (advantages.size() != new_logprobs.size())
    throw std::invalid_argument("pg_loss: advantage count mismatch");
  const std::size_t g = new_logprobs.size();
  if (g == 0) throw std::invalid_argument("pg_loss: empty group");

  double sum_over_responses = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    const double a = advantages[i];
    if (aggregation == Aggregation::kPerToken) {
      double acc = 0.0;
      int n = 0;
      for (std::size_t t = 0; t < new_logprobs[i].size(); ++t) {
        if (!masks[i][t]) continue;
        double rho = std::exp(new_logprobs[i][t] - old_logprobs[i][t]);
        acc += -std::min(rho * a, clip(rho, 1.0 - clip_eps, 1.0 + clip_eps) * a);
        ++n;
      }
      if (n > 0) sum_over_responses += acc / n;
    } else {
      double s = 0.0;
      bool any = false;
      for (std::size_t t = 0; t < new_logprobs[i].size(); ++t) {
        if (!masks[i][t]) continue;
        s += new_logprobs[i][t] - old_logprobs[i][t];
        any = true;
      }
      if (!any) continue;
      double rho = std::exp(s);
      sum_over_responses += -std::min(rho * a, clip(rho, 1.0 - clip_eps, 1.0 + clip_eps) * a);
    }
  }
  return sum_over_responses / static_cast<double>(g);
}

double kl_loss(const std::vector<std::vector<double>>& new_logprobs,
               const std::vector<std::vector<double>>& ref_logprobs,
               const std::vector<std::vector<std::uint8_t>>& masks) {
  check_parallel(new_logprobs, ref_logprobs, masks, "kl_loss");
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < new_logprobs.size(); ++i) {
    for (std::size_t t = 0; t < new_logprobs[i].size(); ++t) {
      if (!masks[i][t]) continue;
      double d = ref_logprobs[i][t] - new_logprobs[i][t];
      acc += std::exp(d) - d - 1.0;
      ++n;
    }
  }
  return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

double entropy_loss(const std::vector<std::vector<std::vector<double>>>& logits,
                    const std::vector<std::vector<std::uint8_t>>& masks) {
  if (logits.size() != masks.size())
    throw std::invalid_argument("entropy_loss: response count mismatch");
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].size() != masks[i].size())
      throw std::invalid_argument("entropy_loss: token count mismatch");
    for (std::size_t t = 0; t < logits[i].size(); ++t) {
      if (!masks[i][t]) continue;
      acc += token_entropy(logits[i][t]);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("entropy_loss: no masked tokens");
  return acc / static_cast<double>(n);
}

double total_loss(const LossParts& parts, const LossConfig& cfg) {
  double total = 0.0;
  if (cfg.enable_pg) total += parts.pg;
  if (cfg.enable_kl) total += cfg.kl_coef * parts.kl;
  if (cfg.enable_entropy) total += cfg.entropy_coef * parts.entropy;
  return total;
}

LossParts batch_loss_parts(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                           const PolicyParams& ref_params, const LossConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  LossParts parts;

  double pg_sum = 0.0;
  double kl_sum = 0.0, ent_sum = 0.0;
  long masked_total = 0;

  for (const RolloutGroup& group : batch) {
    std::vector<std::vector<double>> new_lp(group.responses.size());
    for (std::size_t i = 0; i < group.responses.size(); ++i)
      new_lp[i] = logprob_response(params, group.prompt_ids, group.responses[i].ids);

    if (cfg.enable_pg)
      pg_sum += pg_loss(new_lp, group.old_logprobs, group.advantages, group.masks, cfg.clip_eps,
                        cfg.aggregation);

    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      std::vector<int> ctx = group.prompt_ids;
      for (std::size_t t = 0; t < group.responses[i].ids.size(); ++t) {
        int tok = group.responses[i].ids[t];
        if (group.masks[i][t]) {
          ++masked_total;
          if (cfg.enable_kl) {
            double ref_lp = logprob_response(ref_params, ctx, {tok})[0];
            double d = ref_lp - new_lp[i][t];
            kl_sum += std::exp(d) - d - 1.0;
          }
          if (cfg.enable_entropy) ent_sum += token_entropy(forward_logits(params, ctx));
        }
        ctx.push_back(tok);
      }
    }
  }

  parts.pg = pg_sum / static_cast<double>(batch.size());
  if (masked_total > 0) {
    parts.kl = kl_sum / static_cast<double>(masked_total);
    parts.entropy = ent_sum / static_cast<double>(masked_total);
  }
  return parts;
}

double batch_loss(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                  const PolicyParams& ref_params, const LossConfig& cfg) {
  return total_loss(batch_loss_parts(params, batch, ref_params, cfg), cfg);
}

}  // namespace rlvr
