#include "rlvr/env.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "rlvr/rng.hpp"

namespace rlvr {

std::string family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::kModAdd: return "mod_add";
    case TaskFamily::kDigitSum: return "digit_sum";
    case TaskFamily::kSmallProduct: return "small_product";
  }
  throw std::invalid_argument("unknown task family");
}

TaskFamily family_from_name(const std::string& name) {
  if (name == "mod_add") return TaskFamily::kModAdd;
  if (name == "digit_sum") return TaskFamily::kDigitSum;
  if (name == "small_product") return TaskFamily::kSmallProduct;
  throw std::invalid_argument("unknown task family '" + name + "'");
}

namespace {

std::string digit(int d) { return std::string(1, static_cast<char>('0' + d)); }

}  // namespace

Dataset generate_tasks(TaskFamily family, int count, std::uint64_t seed, int mod_base) {
  if (count < 1) throw std::invalid_argument("generate_tasks: count must be >= 1");
  if (mod_base < 2 || mod_base > 9)
    throw std::invalid_argument("generate_tasks: mod_base must be a digit >= 2");

  struct Item {
    std::vector<std::string> prompt;
    int answer;
  };
  std::vector<Item> space;

  switch (family) {
    case TaskFamily::kModAdd:
      for (int a = 0; a <= 9; ++a)
        for (int b = 0; b <= 9; ++b)
          space.push_back({{digit(a), "+", digit(b), "%", digit(mod_base), "=", "ans"},
                           (a + b) % mod_base});
      break;
    case TaskFamily::kDigitSum:
      for (int n = 1; n <= 99; ++n) {
        std::vector<std::string> prompt = {"sum", " "};
        int total = 0;
        for (char c : std::to_string(n)) {
          prompt.emplace_back(1, c);
          total += c - '0';
        }
        prompt.emplace_back("=");
        prompt.emplace_back("ans");
        space.push_back({std::move(prompt), total});
      }
      break;
    case TaskFamily::kSmallProduct:
      for (int a = 1; a <= 9; ++a)
        for (int b = 1; b <= 9; ++b)
          if (a * b <= 9) space.push_back({{digit(a), "*", digit(b), "=", "ans"}, a * b});
      break;
  }

  if (count > static_cast<int>(space.size()))
    throw std::invalid_argument("generate_tasks: count exceeds the " + family_name(family) +
                                " space of " + std::to_string(space.size()));

  Rng rng = derive_stream(seed, {kStreamGenData, static_cast<std::uint64_t>(family)});
  for (std::size_t i = space.size(); i > 1; --i)
    std::swap(space[i - 1], space[rng.next_below(i)]);

  Dataset ds;
  ds.provenance = "generated " + family_name(family) + " seed=" + std::to_string(seed);
  for (int i = 0; i < count; ++i) {
    PromptExample ex;
    ex.id = family_name(family) + "-" + std::to_string(i);
    ex.prompt = space[i].prompt;
    ex.label = std::to_string(space[i].answer);
    ex.category = family_name(family);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.empty()) throw std::runtime_error("empty dataset");
  std::unordered_set<std::string> ids;
  for (const auto& ex : dataset.examples)
    if (!ids.insert(ex.id).second)
      throw std::runtime_error("dataset: duplicate id '" + ex.id + "'");
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  validate_dataset(dataset);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& ex : dataset.examples) {
    nlohmann::json j = {{"id", ex.id},
                        {"prompt", ex.prompt},
                        {"label", ex.label},
                        {"category", ex.category}};
    f << j.dump() << "\n";
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  Dataset ds;
  ds.provenance = "loaded from " + path;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      PromptExample ex;
      ex.id = j.at("id").get<std::string>();
      ex.prompt = j.at("prompt").get<std::vector<std::string>>();
      ex.label = j.at("label").get<std::string>();
      ex.category = j.at("category").get<std::string>();
      ds.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: parse error at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace rlvr
