#include "rlvr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rlvr {

PolicyParams PolicyParams::zeros(int vocab_size, int dim, int window) {
  PolicyParams p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.window = window;
  p.embedding.assign(static_cast<std::size_t>(vocab_size) * dim, 0.0);
  p.mixing.assign(static_cast<std::size_t>(window) * dim * dim, 0.0);
  p.projection.assign(static_cast<std::size_t>(dim) * vocab_size, 0.0);
  p.bias.assign(static_cast<std::size_t>(vocab_size), 0.0);
  return p;
}

PolicyParams zeros_like(const PolicyParams& p) {
  return PolicyParams::zeros(p.vocab_size, p.dim, p.window);
}

bool same_shape(const PolicyParams& a, const PolicyParams& b) {
  return a.vocab_size == b.vocab_size && a.dim == b.dim && a.window == b.window;
}

bool bitwise_equal(const PolicyParams& a, const PolicyParams& b) {
  if (!same_shape(a, b)) return false;
  auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return eq(a.embedding, b.embedding) && eq(a.mixing, b.mixing) &&
         eq(a.projection, b.projection) && eq(a.bias, b.bias);
}

PolicyParams random_init(const Vocab& vocab, int dim, int window, std::uint64_t seed) {
  PolicyParams p = PolicyParams::zeros(vocab.size(), dim, window);
  Rng rng = derive_stream(seed, {kStreamInit});
  for (double& v : p.embedding) v = rng.next_range(-0.1, 0.1);
  for (double& v : p.mixing) v = rng.next_range(-0.1, 0.1);
  for (double& v : p.projection) v = rng.next_range(-0.1, 0.1);
  // bias stays zero
  return p;
}

namespace {

enum TokenClass { kOther = 0, kOpenBox = 1, kDigit = 2, kCloseBox = 3, kEos = 4, kFiller = 5 };
constexpr int kNumClasses = 6;

int classify(const Vocab& v, int id) {
  const std::string& t = v.token(id);
  if (id == v.eos_id()) return kEos;
  if (t == "\\boxed{") return kOpenBox;
  if (t == "}") return kCloseBox;
  if (t == "#") return kFiller;
  if (t.size() == 1 && t[0] >= '0' && t[0] <= '9') return kDigit;
  return kOther;
}

}  // namespace

PolicyParams base_policy(const Vocab& vocab, int dim, int window, std::uint64_t seed,
                         const BaseModelConfig& cfg) {
  if (dim < kNumClasses + 1)
    throw std::invalid_argument("base_policy: dim must be at least " +
                                std::to_string(kNumClasses + 1));
  PolicyParams p = PolicyParams::zeros(vocab.size(), dim, window);
  Rng rng = derive_stream(seed, {kStreamInit});
  const double s = cfg.noise_scale;
  for (double& v : p.embedding) v = rng.next_range(-s, s);
  for (double& v : p.mixing) v = rng.next_range(-0.02, 0.02);
  for (double& v : p.projection) v = rng.next_range(-s, s);

  // Class one-hot channels in the first kNumClasses embedding dims.
  for (int id = 0; id < vocab.size(); ++id) {
    int c = classify(vocab, id);
    for (int k = 0; k < kNumClasses; ++k) p.embed_row(id)[k] = (k == c) ? 1.0 : 0.0;
  }

  // The last window slot passes the previous token's class through unchanged,
  // so logits can depend on a first-order successor table.
  double* last = p.mix_slot(window - 1);
  for (int k = 0; k < kNumClasses; ++k) last[static_cast<std::size_t>(k) * dim + k] = 1.0;

  // Successor table T[class of prev][class of next], realized through the
  // projection rows of the class channels.
  double T[kNumClasses][kNumClasses] = {};
  T[kOther][kOpenBox] = cfg.open_box_logit;
  T[kOther][kFiller] = cfg.filler_logit;
  T[kOther][kEos] = -1.0;
  T[kFiller][kFiller] = cfg.filler_loop_logit;
  T[kOpenBox][kDigit] = cfg.digit_logit;
  T[kDigit][kDigit] = cfg.digit_digit_logit;
  T[kDigit][kCloseBox] = cfg.close_box_logit;
  T[kCloseBox][kEos] = cfg.eos_logit;

  for (int c = 0; c < kNumClasses; ++c)
    for (int id = 0; id < vocab.size(); ++id)
      p.projection[static_cast<std::size_t>(c) * vocab.size() + id] = T[c][classify(vocab, id)];

  return p;
}

std::vector<double> forward_logits(const PolicyParams& params, const std::vector<int>& context_ids) {
  const int V = params.vocab_size;
  const int d = params.dim;
  const int W = params.window;
  for (int id : context_ids)
    if (id < 0 || id >= V) throw std::invalid_argument("forward_logits: token id out of range");

  // h = sum over window slots of Mix_w^T * embed[token_w]
  std::vector<double> h(static_cast<std::size_t>(d), 0.0);
  const int n = static_cast<int>(context_ids.size());
  for (int w = 0; w < W; ++w) {
    int pos = n - W + w;
    int tok = pos >= 0 ? context_ids[pos] : kPadId;
    const double* e = params.embed_row(tok);
    const double* m = params.mix_slot(w);
    for (int r = 0; r < d; ++r) {
      double er = e[r];
      if (er == 0.0) continue;
      const double* mrow = m + static_cast<std::size_t>(r) * d;
      for (int c = 0; c < d; ++c) h[c] += er * mrow[c];
    }
  }

  std::vector<double> logits(params.bias.begin(), params.bias.end());
  for (int r = 0; r < d; ++r) {
    double hr = h[r];
    if (hr == 0.0) continue;
    const double* prow = params.projection.data() + static_cast<std::size_t>(r) * V;
    for (int v = 0; v < V; ++v) logits[v] += hr * prow[v];
  }
  return logits;
}

double logprob_from_logits(const std::vector<double>& logits, int token_id) {
  if (token_id < 0 || token_id >= static_cast<int>(logits.size()))
    throw std::invalid_argument("logprob_from_logits: token id out of range");
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  return logits[token_id] - mx - std::log(sum);
}

double token_entropy(const std::vector<double>& logits) {
  // H = log sum_v e^{x_v} - sum_v p_v x_v, with max subtraction
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  double lse = mx + std::log(sum);
  double dot = 0.0;
  for (double x : logits) dot += std::exp(x - mx) / sum * x;
  double h = lse - dot;
  return h > 0.0 ? h : 0.0;  // clamp the -0.0 / epsilon underflow case
}

namespace {

int sample_from_logits(const std::vector<double>& logits, double temperature, int pad_id,
                       Rng& rng) {
  const int V = static_cast<int>(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < V; ++v)
    if (v != pad_id) mx = std::max(mx, logits[v] / temperature);
  std::vector<double> w(static_cast<std::size_t>(V), 0.0);
  double total = 0.0;
  for (int v = 0; v < V; ++v) {
    if (v == pad_id) continue;
    w[v] = std::exp(logits[v] / temperature - mx);
    total += w[v];
  }
  double u = rng.next_double() * total;
  double acc = 0.0;
  for (int v = 0; v < V; ++v) {
    acc += w[v];
    if (u < acc) return v;
  }
  return V - 1 == pad_id ? V - 2 : V - 1;  // numerical tail
}

}  // namespace

TokenSequence sample_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                              double temperature, int max_len, Rng& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
  TokenSequence seq;
  std::vector<int> ctx = prompt_ids;
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> logits = forward_logits(params, ctx);
    int tok = sample_from_logits(logits, temperature, kPadId, rng);
    seq.ids.push_back(tok);
    seq.logprobs.push_back(logprob_from_logits(logits, tok));
    ctx.push_back(tok);
    if (tok == kEosId) break;
  }
  return seq;
}

TokenSequence greedy_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                              int max_len) {
  TokenSequence seq;
  std::vector<int> ctx = prompt_ids;
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> logits = forward_logits(params, ctx);
    int best = -1;
    double bv = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < static_cast<int>(logits.size()); ++v) {
      if (v == kPadId) continue;
      if (logits[v] > bv) {
        bv = logits[v];
        best = v;
      }
    }
    seq.ids.push_back(best);
    seq.logprobs.push_back(logprob_from_logits(logits, best));
    ctx.push_back(best);
    if (best == kEosId) break;
  }
  return seq;
}

std::vector<double> logprob_response(const PolicyParams& params, const std::vector<int>& prompt_ids,
                                     const std::vector<int>& response_ids) {
  std::vector<double> out;
  out.reserve(response_ids.size());
  std::vector<int> ctx = prompt_ids;
  for (int tok : response_ids) {
    if (tok < 0 || tok >= params.vocab_size)
      throw std::invalid_argument("logprob_response: token id out of range");
    std::vector<double> logits = forward_logits(params, ctx);
    out.push_back(logprob_from_logits(logits, tok));
    ctx.push_back(tok);
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'R', 'L', 'V', 'R', 'C', 'K', 'P', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& f, std::vector<double>& v) {
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_policy(const PolicyParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_policy: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  write_u32(f, static_cast<std::uint32_t>(params.vocab_size));
  write_u32(f, static_cast<std::uint32_t>(params.dim));
  write_u32(f, static_cast<std::uint32_t>(params.window));
  write_doubles(f, params.embedding);
  write_doubles(f, params.mixing);
  write_doubles(f, params.projection);
  write_doubles(f, params.bias);
  if (!f) throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_policy: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_policy: bad checkpoint header in " + path);
  std::uint32_t V = read_u32(f), d = read_u32(f), W = read_u32(f);
  PolicyParams p = PolicyParams::zeros(static_cast<int>(V), static_cast<int>(d),
                                       static_cast<int>(W));
  read_doubles(f, p.embedding);
  read_doubles(f, p.mixing);
  read_doubles(f, p.projection);
  read_doubles(f, p.bias);
  if (!f) throw std::runtime_error("load_policy: truncated checkpoint " + path);
  return p;
}

}  // namespace rlvr
