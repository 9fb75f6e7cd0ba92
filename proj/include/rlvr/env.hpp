#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlvr/vocab.hpp"

namespace rlvr {

// One verifiable task: prompt tokens, ground-truth answer, stable id.
struct PromptExample {
  std::string id;
  std::vector<std::string> prompt;  // token strings from the standard vocab
  std::string label;
  std::string category;

  bool operator==(const PromptExample&) const = default;
};

struct Dataset {
  std::vector<PromptExample> examples;
  std::string provenance;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  const PromptExample& operator[](std::size_t i) const { return examples[i]; }
};

enum class TaskFamily { kModAdd, kDigitSum, kSmallProduct };

std::string family_name(TaskFamily family);
TaskFamily family_from_name(const std::string& name);

// Deterministic synthetic tasks with single- or double-digit answers.
//   mod_add:       "a+b%m="   label (a+b) mod m, m fixed per draw (default 3)
//   digit_sum:     "sum nn="  label digit sum of a two-digit number
//   small_product: "a*b="     label a*b restricted to one digit
// Prompts are distinct within a draw; count is capped by the family's space.
Dataset generate_tasks(TaskFamily family, int count, std::uint64_t seed, int mod_base = 3);

// Line-delimited JSON with fields id, prompt, label, category.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Validates ids unique / nonempty; throws on violation.
void validate_dataset(const Dataset& dataset);

}  // namespace rlvr
