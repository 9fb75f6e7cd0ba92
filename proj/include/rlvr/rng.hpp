#pragma once

#include <cstdint>
#include <initializer_list>

namespace rlvr {

// Deterministic splitmix64 stream. All randomness in the project flows from
// one root seed through named substreams, so runs are reproducible across
// platforms (no libstdc++ distribution objects involved).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // widening multiply avoids modulo bias well below 2^64
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  // uniform in [lo, hi)
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool next_bool() { return (next_u64() & 1ull) != 0; }

 private:
  std::uint64_t state_;
};

// Derives an independent substream from a seed and a list of tags,
// e.g. derive_stream(seed, {kStreamRollout, step, prompt_index}).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = seed;
  for (std::uint64_t t : tags) s = mix_seed(s, t);
  return Rng(s);
}

// Stream tags used across the project. Numeric so substreams stay stable.
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamBatch = 2,
  kStreamRollout = 3,
  kStreamLabels = 4,
  kStreamGenData = 5,
  kStreamEval = 6,
  kStreamPerturb = 7,
};

}  // namespace rlvr
