#pragma once

#include <string>
#include <vector>

#include "rlvr/trainer.hpp"

namespace rlvr::cli {

// Fully resolved description of a training run: the trainer config plus the
// dataset source and how to construct the initial policy.
struct TrainSpec {
  TrainConfig config;
  std::string data_path;
  std::string out_dir;
  std::string init_kind = "base";  // base | random | checkpoint
  int dim = 16;
  int window = 8;
  std::uint64_t init_seed = 0;
  std::string init_checkpoint;

  static TrainSpec from_json_file(const std::string& path);
  std::string to_json() const;
};

PolicyParams build_initial_policy(const TrainSpec& spec);

// Entry point behind the rlvr binary. Subcommands: gen-data, select-data,
// train, eval, verify, replay. Returns the process exit code: 0 success,
// 2 usage or configuration error, 1 runtime failure.
int dispatch(int argc, const char* const* argv);

int dispatch(const std::vector<std::string>& args);

}  // namespace rlvr::cli
