#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rlvr/cli.hpp"
#include "rlvr/env.hpp"

using namespace rlvr;

namespace fs = std::filesystem;

namespace {

struct CaptureOut {
  std::stringstream buffer;
  std::streambuf* saved;
  CaptureOut() : saved(std::cout.rdbuf(buffer.rdbuf())) {}
  ~CaptureOut() { std::cout.rdbuf(saved); }
  std::string text() const { return buffer.str(); }
};

fs::path sandbox() {
  fs::path dir = fs::temp_directory_path() / "rlvr_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const std::string& data, int steps) {
  std::string config = R"({
  "steps": )" + std::to_string(steps) + R"(,
  "mini_batches_per_rollout": 2,
  "learning_rate": 0.001,
  "rollout": {"batch_size": 8, "group_size": 4, "max_response_len": 8},
  "checkpoint_every": 4,
  "seed": 5,
  "data": ")" + data + R"(",
  "out_dir": ")" + (dir / "run").string() + R"(",
  "init": {"kind": "base", "dim": 16, "window": 8, "seed": 5}
})";
  fs::path path = dir / "config.json";
  std::ofstream(path) << config;
  return path.string();
}

}  // namespace

TEST_CASE("gen-data writes a loadable dataset and manifest") {
  fs::path dir = sandbox();
  std::string out = (dir / "tasks.jsonl").string();
  CaptureOut cap;
  int rc = cli::dispatch({"rlvr", "gen-data", "--family", "mod_add", "--count", "12", "--seed",
                          "3", "--out", out});
  CHECK(rc == 0);
  Dataset d = load_dataset(out);
  CHECK(d.size() == 12);
  CHECK(fs::exists(out + ".manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("verify prints the reward and exits cleanly") {
  fs::path dir = sandbox();
  fs::path resp = dir / "response.txt";
  std::ofstream(resp) << "after rechecking, the answer is \\boxed{12.8}.";
  {
    CaptureOut cap;
    int rc = cli::dispatch({"rlvr", "verify", "--response-file", resp.string(), "--label",
                            "12.8"});
    CHECK(rc == 0);
    CHECK(cap.text() == "1\n");
  }
  {
    CaptureOut cap;
    int rc = cli::dispatch({"rlvr", "verify", "--response-file", resp.string(), "--label",
                            "12.7"});
    CHECK(rc == 0);
    CHECK(cap.text() == "0\n");
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown subcommands and contradictory flags exit 2") {
  CaptureOut cap;
  CHECK(cli::dispatch({"rlvr", "frobnicate"}) == 2);

  fs::path dir = sandbox();
  Dataset data = generate_tasks(TaskFamily::kModAdd, 4, 1);
  std::string data_path = (dir / "data.jsonl").string();
  save_dataset(data, data_path);
  std::string config = write_config(dir, data_path, 2);
  CHECK(cli::dispatch({"rlvr", "train", "--config", config, "--no-entropy", "--entropy-coef",
                       "-0.003"}) == 2);
  fs::remove_all(dir);
}

TEST_CASE("train, eval, and replay wire together") {
  fs::path dir = sandbox();
  Dataset data = generate_tasks(TaskFamily::kModAdd, 4, 1);
  std::string data_path = (dir / "data.jsonl").string();
  save_dataset(data, data_path);
  std::string config = write_config(dir, data_path, 4);

  {
    CaptureOut cap;
    CHECK(cli::dispatch({"rlvr", "train", "--config", config}) == 0);
  }
  fs::path run = dir / "run";
  CHECK(fs::exists(run / "metrics.jsonl"));
  CHECK(fs::exists(run / "final_policy.bin"));
  CHECK(fs::exists(run / "manifest.json"));
  CHECK(fs::exists(run / "history.jsonl"));
  CHECK(fs::exists(run / "state_000004.bin"));

  {
    CaptureOut cap;
    CHECK(cli::dispatch({"rlvr", "eval", "--checkpoint", (run / "final_policy.bin").string(),
                         "--data", data_path, "--k", "4", "--temperature", "0.6", "--seed", "0",
                         "--out", (dir / "report.json").string()}) == 0);
  }
  CHECK(fs::exists(dir / "report.json"));

  {
    CaptureOut cap;
    CHECK(cli::dispatch({"rlvr", "replay", "--manifest", (run / "manifest.json").string()}) == 0);
    CHECK(cap.text().find("metrics identical") != std::string::npos);
  }
  {
    CaptureOut cap;
    CHECK(cli::dispatch({"rlvr", "replay", "--manifest",
                         (dir / "report.json.manifest.json").string()}) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("the output-directory environment override fills in for --out") {
  fs::path dir = sandbox();
  Dataset data = generate_tasks(TaskFamily::kModAdd, 4, 1);
  std::string data_path = (dir / "data.jsonl").string();
  save_dataset(data, data_path);

  // config with no out_dir; the environment variable must supply it
  std::string config = R"({
  "steps": 2,
  "mini_batches_per_rollout": 2,
  "rollout": {"batch_size": 8, "group_size": 4, "max_response_len": 8},
  "seed": 5,
  "data": ")" + data_path + R"(",
  "init": {"kind": "base", "dim": 16, "window": 8, "seed": 5}
})";
  fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << config;

  std::string env_dir = (dir / "env_run").string();
  setenv("RLVR_OUT_DIR", env_dir.c_str(), 1);
  {
    CaptureOut cap;
    CHECK(cli::dispatch({"rlvr", "train", "--config", cfg_path.string()}) == 0);
  }
  unsetenv("RLVR_OUT_DIR");
  CHECK(fs::exists(fs::path(env_dir) / "metrics.jsonl"));

  // without the variable or a flag the run is rejected up front
  CaptureOut cap;
  CHECK(cli::dispatch({"rlvr", "train", "--config", cfg_path.string()}) == 2);
  fs::remove_all(dir);
}

TEST_CASE("select-data picks the top-variance examples") {
  fs::path dir = sandbox();
  Dataset data = generate_tasks(TaskFamily::kModAdd, 3, 2);
  std::string data_path = (dir / "data.jsonl").string();
  save_dataset(data, data_path);

  // example 1 swings the most across epochs
  std::ofstream hist(dir / "history.jsonl");
  hist << R"({"id":")" << data[0].id << R"(","epoch":0,"accuracy":0.5})" << "\n";
  hist << R"({"id":")" << data[0].id << R"(","epoch":1,"accuracy":0.5})" << "\n";
  hist << R"({"id":")" << data[1].id << R"(","epoch":0,"accuracy":0.0})" << "\n";
  hist << R"({"id":")" << data[1].id << R"(","epoch":1,"accuracy":1.0})" << "\n";
  hist << R"({"id":")" << data[2].id << R"(","epoch":0,"accuracy":1.0})" << "\n";
  hist << R"({"id":")" << data[2].id << R"(","epoch":1,"accuracy":1.0})" << "\n";
  hist.close();

  CaptureOut cap;
  int rc = cli::dispatch({"rlvr", "select-data", "--history", (dir / "history.jsonl").string(),
                          "--data", data_path, "--top-k", "1", "--out",
                          (dir / "selected.jsonl").string()});
  CHECK(rc == 0);
  Dataset selected = load_dataset((dir / "selected.jsonl").string());
  REQUIRE(selected.size() == 1);
  CHECK(selected[0].id == data[1].id);
  fs::remove_all(dir);
}
