#pragma once

#include <map>
#include <string>
#include <vector>

#include "rlvr/env.hpp"

namespace rlvr {

// Per-example accuracy trace: s[i][e] is the mean group accuracy of example
// i in epoch e. Accumulated group by group, then finalized into a dense
// history where every example spans the same epochs.
class AccuracyHistory {
 public:
  void record_group(const std::string& example_id, int epoch, double group_mean_reward);

  // Epoch-mean accuracies per example over the observed epoch span; throws
  // if some example is missing an epoch the others have.
  std::map<std::string, std::vector<double>> finalize() const;

  int epoch_count() const { return acc_.empty() ? 0 : max_epoch_ - min_epoch_ + 1; }
  bool empty() const { return acc_.empty(); }

 private:
  struct Cell {
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::string, std::map<int, Cell>> acc_;
  int min_epoch_ = 0;
  int max_epoch_ = -1;
};

// Population variance of an accuracy trace; needs at least two epochs.
double variance_score(const std::vector<double>& trace);

// Ids ordered by descending score; ties keep the order of `ordered_ids`
// (the original dataset order). Every input id appears exactly once.
std::vector<std::string> rank_examples(const std::vector<std::string>& ordered_ids,
                                       const std::map<std::string, double>& scores);

// First k of the ranking, materialized from the source dataset.
Dataset select_top_k(const std::vector<std::string>& ranking, int k, const Dataset& source);

// History file records: {"id": ..., "epoch": ..., "accuracy": ...} per line.
void save_history(const std::map<std::string, std::vector<double>>& history,
                  const std::string& path);
std::map<std::string, std::vector<double>> load_history(const std::string& path);

}  // namespace rlvr
