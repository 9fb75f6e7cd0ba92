#include "rlvr/selection.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace rlvr {

void AccuracyHistory::record_group(const std::string& example_id, int epoch,
                                   double group_mean_reward) {
  if (epoch < 0) throw std::invalid_argument("record_group: negative epoch");
  if (acc_.empty()) min_epoch_ = epoch;
  Cell& c = acc_[example_id][epoch];
  c.sum += group_mean_reward;
  c.n += 1;
  min_epoch_ = std::min(min_epoch_, epoch);
  max_epoch_ = std::max(max_epoch_, epoch);
}

std::map<std::string, std::vector<double>> AccuracyHistory::finalize() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [id, per_epoch] : acc_) {
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(max_epoch_ - min_epoch_ + 1));
    for (int e = min_epoch_; e <= max_epoch_; ++e) {
      auto it = per_epoch.find(e);
      if (it == per_epoch.end())
        throw std::runtime_error("accuracy history: example '" + id + "' missing epoch " +
                                 std::to_string(e));
      trace.push_back(it->second.sum / it->second.n);
    }
    out[id] = std::move(trace);
  }
  return out;
}

double variance_score(const std::vector<double>& trace) {
  if (trace.size() < 2)
    throw std::invalid_argument("variance_score: need at least two epochs");
  bool constant = true;
  for (double s : trace) constant = constant && s == trace.front();
  if (constant) return 0.0;  // exact, not up to rounding of the mean
  double mean = 0.0;
  for (double s : trace) mean += s;
  mean /= static_cast<double>(trace.size());
  double var = 0.0;
  for (double s : trace) var += (s - mean) * (s - mean);
  return var / static_cast<double>(trace.size());
}

std::vector<std::string> rank_examples(const std::vector<std::string>& ordered_ids,
                                       const std::map<std::string, double>& scores) {
  if (ordered_ids.empty()) throw std::invalid_argument("rank_examples: no ids");
  std::vector<double> by_index(ordered_ids.size());
  for (std::size_t i = 0; i < ordered_ids.size(); ++i) {
    auto it = scores.find(ordered_ids[i]);
    if (it == scores.end())
      throw std::invalid_argument("rank_examples: no score for id '" + ordered_ids[i] + "'");
    by_index[i] = it->second;
  }
  std::vector<std::size_t> idx(ordered_ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return by_index[a] > by_index[b]; });
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ordered_ids[i]);
  return out;
}

Dataset select_top_k(const std::vector<std::string>& ranking, int k, const Dataset& source) {
  if (k < 1 || k > static_cast<int>(ranking.size()))
    throw std::invalid_argument("select_top_k: k out of range");
  std::unordered_map<std::string, const PromptExample*> by_id;
  for (const auto& ex : source.examples) by_id[ex.id] = &ex;
  Dataset out;
  out.provenance = "top-" + std::to_string(k) + " by variance from " + source.provenance;
  for (int j = 0; j < k; ++j) {
    auto it = by_id.find(ranking[j]);
    if (it == by_id.end())
      throw std::invalid_argument("select_top_k: id '" + ranking[j] + "' not in source dataset");
    out.examples.push_back(*it->second);
  }
  return out;
}

void save_history(const std::map<std::string, std::vector<double>>& history,
                  const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_history: cannot open " + path);
  for (const auto& [id, trace] : history)
    for (std::size_t e = 0; e < trace.size(); ++e) {
      nlohmann::json j = {{"id", id}, {"epoch", e}, {"accuracy", trace[e]}};
      f << j.dump() << "\n";
    }
}

std::map<std::string, std::vector<double>> load_history(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_history: cannot open " + path);
  std::map<std::string, std::map<int, double>> sparse;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      sparse[j.at("id").get<std::string>()][j.at("epoch").get<int>()] =
          j.at("accuracy").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_history: parse error at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  std::map<std::string, std::vector<double>> out;
  for (auto& [id, per_epoch] : sparse) {
    std::vector<double> trace;
    for (auto& [e, v] : per_epoch) {
      if (e != static_cast<int>(trace.size()))
        throw std::runtime_error("load_history: example '" + id + "' has a gap at epoch " +
                                 std::to_string(trace.size()));
      trace.push_back(v);
    }
    out[id] = std::move(trace);
  }
  return out;
}

}  // namespace rlvr
