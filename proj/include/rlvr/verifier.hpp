#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlvr/rng.hpp"

namespace rlvr {

// Canonical form of an extracted or ground-truth answer. Parsing is total:
// anything that is not a fraction or a plain number becomes a lowercased
// string. Rationals are fully reduced with a positive denominator; decimals
// are exact digit strings with trailing zeros trimmed.
struct CanonicalAnswer {
  enum class Kind { kRational, kDecimal, kString };
  Kind kind = Kind::kString;
  long long num = 0;    // rational
  long long den = 1;    // rational, > 0
  std::string decimal;  // canonical digits, e.g. "12.8", "-3", "0.5"
  std::string text;     // string kind, lowercased
  std::string raw;      // original extracted text
};

// Contents of the last balanced \boxed{...} in the text, handling nested
// braces. Absent or unbalanced occurrences yield nullopt.
std::optional<std::string> extract_boxed(const std::string& text);

CanonicalAnswer normalize_answer(const std::string& raw);

// Exact equivalence, no numeric tolerance. Rationals compare by cross
// multiplication; decimals by canonical digits; a rational equals a decimal
// iff they denote the same exact value.
bool answers_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b);

// 1 iff a final answer parses out of the response and matches the label.
int outcome_reward(const std::string& response_text, const std::string& label);

// 1 iff a nonempty final answer parses out of the response at all.
int format_reward(const std::string& response_text);

// Returns a corrupted label guaranteed non-equivalent to the input.
// Numbers move by +-k with k in [1,10] plus a random sign flip; fractions
// perturb numerator and denominator, keeping the denominator positive.
// Throws for labels that normalize to string kind.
std::string perturb_label(const std::string& label, Rng& rng);

struct CorpusTriple {
  std::string response;
  std::string label;
  int expected = 0;
};

// Line-delimited JSON records with fields response, label, expected.
std::vector<CorpusTriple> load_corpus(const std::string& path);

}  // namespace rlvr
