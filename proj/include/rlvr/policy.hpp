#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlvr/rng.hpp"
#include "rlvr/vocab.hpp"

namespace rlvr {

// Fixed id convention, enforced by Vocab: pad is id 0 (never emitted, used
// for left padding), eos is id 1.
constexpr int kPadId = 0;
constexpr int kEosId = 1;

// Token ids plus (optionally) the per-token log-probs recorded when the
// sequence was sampled. Log-probs are always temperature-1 policy values.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<double> logprobs;  // empty or parallel to ids

  std::size_t size() const { return ids.size(); }
};

// Parameters of the fixed-window linear token policy:
//   h = sum_w  Mix_w^T * embed[ctx_w],   logits = Proj^T h + bias
// where ctx is the last `window` token ids, left-padded with pad.
struct PolicyParams {
  int vocab_size = 0;
  int dim = 0;
  int window = 0;

  std::vector<double> embedding;   // vocab_size x dim, row-major
  std::vector<double> mixing;      // window x dim x dim, row-major
  std::vector<double> projection;  // dim x vocab_size, row-major
  std::vector<double> bias;        // vocab_size

  std::size_t param_count() const {
    return embedding.size() + mixing.size() + projection.size() + bias.size();
  }

  double* embed_row(int token) { return embedding.data() + static_cast<std::size_t>(token) * dim; }
  const double* embed_row(int token) const {
    return embedding.data() + static_cast<std::size_t>(token) * dim;
  }
  double* mix_slot(int w) {
    return mixing.data() + static_cast<std::size_t>(w) * dim * dim;
  }
  const double* mix_slot(int w) const {
    return mixing.data() + static_cast<std::size_t>(w) * dim * dim;
  }

  static PolicyParams zeros(int vocab_size, int dim, int window);
};

PolicyParams zeros_like(const PolicyParams& p);

bool same_shape(const PolicyParams& a, const PolicyParams& b);
bool bitwise_equal(const PolicyParams& a, const PolicyParams& b);

// Small random init: embedding/mixing/projection uniform in [-0.1, 0.1],
// bias zero. Keeps the initial policy near uniform.
PolicyParams random_init(const Vocab& vocab, int dim, int window, std::uint64_t seed);

// Knobs for the synthetic "pretrained base model" (see base_policy below).
struct BaseModelConfig {
  double open_box_logit = 1.6;    // other -> "\boxed{"
  double digit_logit = 3.2;       // "\boxed{" -> digit
  double digit_digit_logit = 1.3; // digit -> digit (multi-digit answers)
  double close_box_logit = 3.4;   // digit -> "}"
  double eos_logit = 5.0;         // "}" -> eos
  double filler_logit = 3.0;      // other -> "#"
  double filler_loop_logit = 6.0; // "#" -> "#", the low-entropy repetition trap
  double noise_scale = 0.1;       // residual random structure
};

// Builds a policy that behaves like a small pretrained model rather than a
// random one: it carries a latent answer-format habit (open box, digits,
// close box, eos) driven by the previous token, but sampling is dominated by
// a sharp self-repeating filler token, so responses usually run out of budget
// before producing a parseable answer. RL (or entropy maximization alone)
// can unlock the latent format. Deterministic for a fixed seed.
PolicyParams base_policy(const Vocab& vocab, int dim, int window, std::uint64_t seed,
                         const BaseModelConfig& cfg = {});

// Logits over the vocabulary for the next token after `context_ids`.
// Uses the last `window` ids, left-padded with pad. Throws on invalid ids.
std::vector<double> forward_logits(const PolicyParams& params, const std::vector<int>& context_ids);

// log softmax(logits)[token_id]
double logprob_from_logits(const std::vector<double>& logits, int token_id);

// H(softmax(logits)) via the log-sum-exp form with max subtraction.
double token_entropy(const std::vector<double>& logits);

// Autoregressive sampling at the given temperature. The pad logit is masked
// to -inf so pad is never emitted. Stored log-probs are temperature-1 values.
// Stops after emitting eos or after max_len tokens.
TokenSequence sample_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                              double temperature, int max_len, Rng& rng);

// Greedy (argmax) decode, the temperature -> 0 limit of sample_response.
TokenSequence greedy_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                              int max_len);

// Temperature-1 log-prob of each response token given prompt + prefix.
std::vector<double> logprob_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                                     const std::vector<int>& response_ids);

// Checkpoint I/O. The binary layout is versioned and exact: a round trip
// reproduces logits bitwise.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace rlvr
