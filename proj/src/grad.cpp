#include "rlvr/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlvr {

namespace {

struct StepCache {
  std::vector<int> window;     // the W context token ids (after left padding)
  std::vector<double> hidden;  // d
  std::vector<double> logits;  // V
  std::vector<double> probs;   // V
  double logprob = 0.0;        // log p[target]
  double ref_logprob = 0.0;
};

// Same computation (and summation order) as forward_logits, but keeps the
// window and hidden state for the backward pass.
void forward_cached(const PolicyParams& p, const std::vector<int>& ctx, StepCache& out) {
  const int V = p.vocab_size, d = p.dim, W = p.window;
  out.window.resize(static_cast<std::size_t>(W));
  const int n = static_cast<int>(ctx.size());
  for (int w = 0; w < W; ++w) {
    int pos = n - W + w;
    out.window[w] = pos >= 0 ? ctx[pos] : kPadId;
  }
  out.hidden.assign(static_cast<std::size_t>(d), 0.0);
  for (int w = 0; w < W; ++w) {
    const double* e = p.embed_row(out.window[w]);
    const double* m = p.mix_slot(w);
    for (int r = 0; r < d; ++r) {
      double er = e[r];
      if (er == 0.0) continue;
      const double* mrow = m + static_cast<std::size_t>(r) * d;
      for (int c = 0; c < d; ++c) out.hidden[c] += er * mrow[c];
    }
  }
  out.logits.assign(p.bias.begin(), p.bias.end());
  for (int r = 0; r < d; ++r) {
    double hr = out.hidden[r];
    if (hr == 0.0) continue;
    const double* prow = p.projection.data() + static_cast<std::size_t>(r) * V;
    for (int v = 0; v < V; ++v) out.logits[v] += hr * prow[v];
  }
  out.probs.resize(static_cast<std::size_t>(V));
  double mx = *std::max_element(out.logits.begin(), out.logits.end());
  double sum = 0.0;
  for (int v = 0; v < V; ++v) {
    out.probs[v] = std::exp(out.logits[v] - mx);
    sum += out.probs[v];
  }
  for (int v = 0; v < V; ++v) out.probs[v] /= sum;
}

// Routes d(loss)/d(logits) at one context into the parameter gradient.
void backward_logits(const PolicyParams& p, const StepCache& cache,
                     const std::vector<double>& grad_logits, PolicyParams& grad) {
  const int V = p.vocab_size, d = p.dim, W = p.window;
  for (int v = 0; v < V; ++v) grad.bias[v] += grad_logits[v];

  std::vector<double> grad_h(static_cast<std::size_t>(d), 0.0);
  for (int r = 0; r < d; ++r) {
    const double* prow = p.projection.data() + static_cast<std::size_t>(r) * V;
    double* gprow = grad.projection.data() + static_cast<std::size_t>(r) * V;
    double hr = cache.hidden[r];
    double acc = 0.0;
    for (int v = 0; v < V; ++v) {
      gprow[v] += hr * grad_logits[v];
      acc += prow[v] * grad_logits[v];
    }
    grad_h[r] = acc;
  }

  for (int w = 0; w < W; ++w) {
    int tok = cache.window[w];
    const double* e = p.embed_row(tok);
    const double* m = p.mix_slot(w);
    double* gm = grad.mix_slot(w);
    double* ge = grad.embed_row(tok);
    for (int r = 0; r < d; ++r) {
      const double* mrow = m + static_cast<std::size_t>(r) * d;
      double* gmrow = gm + static_cast<std::size_t>(r) * d;
      double er = e[r];
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        gmrow[c] += er * grad_h[c];
        acc += mrow[c] * grad_h[c];
      }
      ge[r] += acc;
    }
  }
}

double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

PolicyParams loss_gradients(const PolicyParams& params, const std::vector<RolloutGroup>& batch,
                            const PolicyParams& ref_params, const PolicyParams& old_params,
                            const LossConfig& cfg, LossParts* parts_out) {
  if (batch.empty()) throw std::invalid_argument("loss_gradients: empty batch");
  if (!same_shape(params, ref_params) || !same_shape(params, old_params))
    throw std::invalid_argument("loss_gradients: parameter shape mismatch");
  cfg.validate();

  PolicyParams grad = zeros_like(params);
  LossParts parts;
  const double B = static_cast<double>(batch.size());

  // Count masked tokens once; KL and entropy are masked means over the batch.
  long masked_total = 0;
  for (const RolloutGroup& g : batch) {
    if (g.responses.size() != g.masks.size() || g.responses.size() != g.advantages.size())
      throw std::invalid_argument("loss_gradients: group fields out of step");
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      if (g.masks[i].size() != g.responses[i].ids.size())
        throw std::invalid_argument("loss_gradients: mask length mismatch");
      for (std::uint8_t m : g.masks[i]) masked_total += m ? 1 : 0;
    }
  }

  const bool need_kl = cfg.enable_kl;
  const bool need_ent = cfg.enable_entropy;
  const bool need_pg = cfg.enable_pg;

  std::vector<StepCache> caches;
  std::vector<double> grad_logits;

  for (const RolloutGroup& group : batch) {
    const std::size_t G = group.responses.size();
    for (std::size_t i = 0; i < G; ++i) {
      const std::vector<int>& resp = group.responses[i].ids;
      const std::size_t T = resp.size();
      const double adv = group.advantages[i];

      const std::vector<double>* old_lp = nullptr;
      std::vector<double> old_recomputed;
      if (i < group.old_logprobs.size() && group.old_logprobs[i].size() == T) {
        old_lp = &group.old_logprobs[i];
      } else {
        old_recomputed = logprob_response(old_params, group.prompt_ids, resp);
        old_lp = &old_recomputed;
      }

      caches.assign(T, StepCache{});
      std::vector<int> ctx = group.prompt_ids;
      for (std::size_t t = 0; t < T; ++t) {
        forward_cached(params, ctx, caches[t]);
        caches[t].logprob = logprob_from_logits(caches[t].logits, resp[t]);
        if (need_kl && group.masks[i][t])
          caches[t].ref_logprob =
              logprob_from_logits(forward_logits(ref_params, ctx), resp[t]);
        ctx.push_back(resp[t]);
      }

      // Per-response PG bookkeeping.
      int n_masked = 0;
      double sum_new = 0.0, sum_old = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        if (!group.masks[i][t]) continue;
        ++n_masked;
        sum_new += caches[t].logprob;
        sum_old += (*old_lp)[t];
      }

      double seq_coef = 0.0;  // d(pg)/d(logprob_t), same for all masked t in sequence mode
      if (need_pg && cfg.aggregation == Aggregation::kPerSequence && n_masked > 0) {
        double rho = std::exp(sum_new - sum_old);
        double u = rho * adv;
        double c = clip(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        parts.pg += -std::min(u, c) / (B * static_cast<double>(G));
        if (u <= c) seq_coef = -rho * adv / (B * static_cast<double>(G));
      }

      for (std::size_t t = 0; t < T; ++t) {
        if (!group.masks[i][t]) continue;
        const StepCache& cache = caches[t];
        double coef_lp = 0.0;  // coefficient on d(logprob)/d(logits)

        if (need_pg) {
          if (cfg.aggregation == Aggregation::kPerToken) {
            double rho = std::exp(cache.logprob - (*old_lp)[t]);
            double u = rho * adv;
            double c = clip(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
            double scale = 1.0 / (B * static_cast<double>(G) * n_masked);
            parts.pg += -std::min(u, c) * scale;
            if (u <= c) coef_lp += -rho * adv * scale;
          } else {
            coef_lp += seq_coef;
          }
        }
        if (need_kl && masked_total > 0) {
          double d = cache.ref_logprob - cache.logprob;
          parts.kl += (std::exp(d) - d - 1.0) / static_cast<double>(masked_total);
          coef_lp += cfg.kl_coef * (1.0 - std::exp(d)) / static_cast<double>(masked_total);
        }

        grad_logits.assign(cache.logits.size(), 0.0);
        if (coef_lp != 0.0) {
          const int y = resp[t];
          for (std::size_t v = 0; v < grad_logits.size(); ++v)
            grad_logits[v] = coef_lp * ((static_cast<int>(v) == y ? 1.0 : 0.0) - cache.probs[v]);
        }
        if (need_ent && masked_total > 0) {
          double h = token_entropy(cache.logits);
          parts.entropy += h / static_cast<double>(masked_total);
          double scale = cfg.entropy_coef / static_cast<double>(masked_total);
          for (std::size_t v = 0; v < grad_logits.size(); ++v) {
            double p = cache.probs[v];
            if (p > 0.0) grad_logits[v] += scale * (-p * (std::log(p) + h));
          }
        }

        bool any = false;
        for (double gv : grad_logits)
          if (gv != 0.0) {
            any = true;
            break;
          }
        if (any) backward_logits(params, cache, grad_logits, grad);
      }
    }
  }

  if (parts_out) *parts_out = parts;
  return grad;
}

}  // namespace rlvr
