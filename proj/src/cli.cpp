#include "rlvr/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlvr/eval.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "rlvr-0.1.0";

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json loss_to_json(const LossConfig& l) {
  return {{"clip_eps", l.clip_eps},
          {"kl_coef", l.kl_coef},
          {"entropy_coef", l.entropy_coef},
          {"enable_pg", l.enable_pg},
          {"enable_kl", l.enable_kl},
          {"enable_entropy", l.enable_entropy},
          {"aggregation", l.aggregation == Aggregation::kPerToken ? "per_token" : "per_sequence"}};
}

LossConfig loss_from_json(const json& j) {
  LossConfig l;
  l.clip_eps = j.value("clip_eps", l.clip_eps);
  l.kl_coef = j.value("kl_coef", l.kl_coef);
  l.entropy_coef = j.value("entropy_coef", l.entropy_coef);
  l.enable_pg = j.value("enable_pg", l.enable_pg);
  l.enable_kl = j.value("enable_kl", l.enable_kl);
  l.enable_entropy = j.value("enable_entropy", l.enable_entropy);
  std::string agg = j.value("aggregation", "per_token");
  if (agg == "per_token") l.aggregation = Aggregation::kPerToken;
  else if (agg == "per_sequence") l.aggregation = Aggregation::kPerSequence;
  else throw std::invalid_argument("config: unknown aggregation '" + agg + "'");
  return l;
}

json rollout_to_json(const RolloutConfig& r) {
  return {{"batch_size", r.batch_size},
          {"group_size", r.group_size},
          {"temperature", r.temperature},
          {"max_response_len", r.max_response_len},
          {"reward_mode", r.reward_mode == RewardMode::kOutcome ? "outcome" : "format"}};
}

RolloutConfig rollout_from_json(const json& j) {
  RolloutConfig r;
  r.batch_size = j.value("batch_size", r.batch_size);
  r.group_size = j.value("group_size", r.group_size);
  r.temperature = j.value("temperature", r.temperature);
  r.max_response_len = j.value("max_response_len", r.max_response_len);
  std::string mode = j.value("reward_mode", "outcome");
  if (mode == "outcome") r.reward_mode = RewardMode::kOutcome;
  else if (mode == "format") r.reward_mode = RewardMode::kFormat;
  else throw std::invalid_argument("config: unknown reward_mode '" + mode + "'");
  return r;
}

json spec_to_json(const TrainSpec& s) {
  return {{"steps", s.config.steps},
          {"mini_batches_per_rollout", s.config.mini_batches_per_rollout},
          {"learning_rate", s.config.learning_rate},
          {"weight_decay", s.config.weight_decay},
          {"enable_weight_decay", s.config.enable_weight_decay},
          {"loss", loss_to_json(s.config.loss)},
          {"rollout", rollout_to_json(s.config.rollout)},
          {"seed", s.config.seed},
          {"checkpoint_every", s.config.checkpoint_every},
          {"label_error_rate", s.config.label_error_rate},
          {"data", s.data_path},
          {"out_dir", s.out_dir},
          {"init", {{"kind", s.init_kind},
                    {"dim", s.dim},
                    {"window", s.window},
                    {"seed", s.init_seed},
                    {"checkpoint", s.init_checkpoint}}}};
}

TrainSpec spec_from_json(const json& j) {
  TrainSpec s;
  s.config.steps = j.value("steps", s.config.steps);
  s.config.mini_batches_per_rollout =
      j.value("mini_batches_per_rollout", s.config.mini_batches_per_rollout);
  s.config.learning_rate = j.value("learning_rate", s.config.learning_rate);
  s.config.weight_decay = j.value("weight_decay", s.config.weight_decay);
  s.config.enable_weight_decay = j.value("enable_weight_decay", s.config.enable_weight_decay);
  if (j.contains("loss")) s.config.loss = loss_from_json(j.at("loss"));
  if (j.contains("rollout")) s.config.rollout = rollout_from_json(j.at("rollout"));
  s.config.seed = j.value("seed", s.config.seed);
  s.config.checkpoint_every = j.value("checkpoint_every", s.config.checkpoint_every);
  s.config.label_error_rate = j.value("label_error_rate", s.config.label_error_rate);
  s.data_path = j.value("data", s.data_path);
  s.out_dir = j.value("out_dir", s.out_dir);
  if (j.contains("init")) {
    const json& init = j.at("init");
    s.init_kind = init.value("kind", s.init_kind);
    s.dim = init.value("dim", s.dim);
    s.window = init.value("window", s.window);
    s.init_seed = init.value("seed", s.init_seed);
    s.init_checkpoint = init.value("checkpoint", s.init_checkpoint);
  }
  return s;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp);
    f << content;
  }
  fs::rename(tmp, path);
}

json make_manifest(const std::string& subcommand, const std::vector<std::string>& argv,
                   const json& resolved_config, std::uint64_t seed, const std::string& out_dir,
                   const std::vector<std::string>& artifacts, const std::string& started) {
  return {{"version", kVersion},
          {"subcommand", subcommand},
          {"command_line", argv},
          {"config", resolved_config},
          {"seed", seed},
          {"out_dir", out_dir},
          {"artifacts", artifacts},
          {"started_at", started},
          {"finished_at", timestamp()}};
}

}  // namespace

TrainSpec TrainSpec::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }
  return spec_from_json(j);
}

std::string TrainSpec::to_json() const { return spec_to_json(*this).dump(2); }

PolicyParams build_initial_policy(const TrainSpec& spec) {
  Vocab vocab = Vocab::standard();
  if (spec.init_kind == "base") return base_policy(vocab, spec.dim, spec.window, spec.init_seed);
  if (spec.init_kind == "random")
    return random_init(vocab, spec.dim, spec.window, spec.init_seed);
  if (spec.init_kind == "checkpoint") {
    if (spec.init_checkpoint.empty())
      throw std::invalid_argument("config: init.kind=checkpoint needs init.checkpoint");
    return load_policy(spec.init_checkpoint);
  }
  throw std::invalid_argument("config: unknown init.kind '" + spec.init_kind + "'");
}

namespace {

struct TrainArtifacts {
  std::vector<std::string> files;  // relative to out_dir
};

TrainArtifacts run_train_spec(const TrainSpec& spec) {
  Dataset dataset = load_dataset(spec.data_path);
  fs::create_directories(spec.out_dir);
  PolicyParams init = build_initial_policy(spec);

  TrainResult result = train(spec.config, dataset, init, spec.out_dir);

  TrainArtifacts art;
  {
    std::ostringstream lines;
    for (const auto& rec : result.metrics) lines << rec.to_json_line() << "\n";
    write_text_atomic(spec.out_dir + "/metrics.jsonl", lines.str());
    art.files.push_back("metrics.jsonl");
  }
  save_policy(result.final_params, spec.out_dir + "/final_policy.bin");
  art.files.push_back("final_policy.bin");
  if (!result.accuracy_history.empty()) {
    save_history(result.accuracy_history, spec.out_dir + "/history.jsonl");
    art.files.push_back("history.jsonl");
  }
  return art;
}

int cmd_train(const TrainSpec& resolved, const std::vector<std::string>& argv) {
  std::string started = timestamp();
  TrainArtifacts art = run_train_spec(resolved);
  json manifest = make_manifest("train", argv, spec_to_json(resolved), resolved.config.seed,
                                resolved.out_dir, art.files, started);
  write_text_atomic(resolved.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "trained " << resolved.config.steps << " steps; artifacts in " << resolved.out_dir
            << "\n";
  return 0;
}

int cmd_gen_data(const std::string& family, int count, std::uint64_t seed, int mod_base,
                 const std::string& out, const std::vector<std::string>& argv) {
  std::string started = timestamp();
  Dataset ds = generate_tasks(family_from_name(family), count, seed, mod_base);
  save_dataset(ds, out);
  json cfg = {{"family", family}, {"count", count}, {"seed", seed}, {"mod_base", mod_base},
              {"out", out}};
  fs::path outp(out);
  json manifest = make_manifest("gen-data", argv, cfg, seed,
                                outp.has_parent_path() ? outp.parent_path().string() : ".",
                                {outp.filename().string()}, started);
  write_text_atomic(out + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << ds.size() << " examples to " << out << "\n";
  return 0;
}

int cmd_select_data(const std::string& history_path, const std::string& data_path, int top_k,
                    const std::string& out, const std::vector<std::string>& argv) {
  std::string started = timestamp();
  auto history = load_history(history_path);
  Dataset source = load_dataset(data_path);

  std::map<std::string, double> scores;
  for (const auto& [id, trace] : history) scores[id] = variance_score(trace);
  std::vector<std::string> ordered_ids;
  for (const auto& ex : source.examples) ordered_ids.push_back(ex.id);
  std::vector<std::string> ranking = rank_examples(ordered_ids, scores);
  Dataset selected = select_top_k(ranking, top_k, source);
  save_dataset(selected, out);

  json cfg = {{"history", history_path}, {"data", data_path}, {"top_k", top_k}, {"out", out}};
  fs::path outp(out);
  json manifest = make_manifest("select-data", argv, cfg, 0,
                                outp.has_parent_path() ? outp.parent_path().string() : ".",
                                {outp.filename().string()}, started);
  write_text_atomic(out + ".manifest.json", manifest.dump(2) + "\n");
  for (int j = 0; j < top_k; ++j) std::cout << "pi_" << (j + 1) << " = " << ranking[j] << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, int k,
             double temperature, std::uint64_t seed, const std::string& out,
             const std::vector<std::string>& argv) {
  std::string started = timestamp();
  PolicyParams params = load_policy(checkpoint);
  Dataset data = load_dataset(data_path);
  Vocab vocab = Vocab::standard();
  EvalReport report = evaluate(params, vocab, data, k, temperature, seed);
  save_report(report, out);

  json cfg = {{"checkpoint", checkpoint}, {"data", data_path}, {"k", k},
              {"temperature", temperature}, {"seed", seed}, {"out", out}};
  fs::path outp(out);
  json manifest = make_manifest("eval", argv, cfg, seed,
                                outp.has_parent_path() ? outp.parent_path().string() : ".",
                                {outp.filename().string()}, started);
  write_text_atomic(out + ".manifest.json", manifest.dump(2) + "\n");
  std::printf("pass1_avg_%d = %.4f  pass_%d = %.4f  boxed_ratio = %.4f\n", k, report.pass1_avg_k,
              k, report.pass_n, report.boxed_ratio);
  return 0;
}

int cmd_verify(const std::string& response_file, const std::string& label,
               const std::vector<std::string>& argv) {
  std::string started = timestamp();
  std::ifstream f(response_file);
  if (!f) throw std::runtime_error("verify: cannot open " + response_file);
  std::stringstream ss;
  ss << f.rdbuf();
  int reward = outcome_reward(ss.str(), label);
  std::cout << reward << "\n";
  if (const char* env = std::getenv("RLVR_OUT_DIR")) {
    fs::create_directories(env);
    json cfg = {{"response_file", response_file}, {"label", label}, {"reward", reward}};
    json manifest = make_manifest("verify", argv, cfg, 0, env, {}, started);
    write_text_atomic(std::string(env) + "/verify.manifest.json", manifest.dump(2) + "\n");
  }
  return 0;
}

bool files_identical(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

int cmd_replay(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("replay: cannot open " + manifest_path);
  json manifest;
  f >> manifest;
  std::string sub = manifest.at("subcommand").get<std::string>();
  std::string orig_dir = manifest.at("out_dir").get<std::string>();
  std::vector<std::string> artifacts = manifest.at("artifacts").get<std::vector<std::string>>();
  json cfg = manifest.at("config");

  fs::path replay_dir = fs::path(orig_dir) / "replay_tmp";
  fs::create_directories(replay_dir);

  if (sub == "train") {
    TrainSpec spec = spec_from_json(cfg);
    spec.out_dir = replay_dir.string();
    run_train_spec(spec);
  } else if (sub == "gen-data") {
    Dataset ds = generate_tasks(family_from_name(cfg.at("family").get<std::string>()),
                                cfg.at("count").get<int>(), cfg.at("seed").get<std::uint64_t>(),
                                cfg.at("mod_base").get<int>());
    save_dataset(ds, (replay_dir / fs::path(cfg.at("out").get<std::string>()).filename()).string());
  } else if (sub == "eval") {
    PolicyParams params = load_policy(cfg.at("checkpoint").get<std::string>());
    Dataset data = load_dataset(cfg.at("data").get<std::string>());
    Vocab vocab = Vocab::standard();
    EvalReport report = evaluate(params, vocab, data, cfg.at("k").get<int>(),
                                 cfg.at("temperature").get<double>(),
                                 cfg.at("seed").get<std::uint64_t>());
    save_report(report, (replay_dir / fs::path(cfg.at("out").get<std::string>()).filename()).string());
  } else if (sub == "select-data") {
    auto history = load_history(cfg.at("history").get<std::string>());
    Dataset source = load_dataset(cfg.at("data").get<std::string>());
    std::map<std::string, double> scores;
    for (const auto& [id, trace] : history) scores[id] = variance_score(trace);
    std::vector<std::string> ordered_ids;
    for (const auto& ex : source.examples) ordered_ids.push_back(ex.id);
    Dataset selected = select_top_k(rank_examples(ordered_ids, scores),
                                    cfg.at("top_k").get<int>(), source);
    save_dataset(selected,
                 (replay_dir / fs::path(cfg.at("out").get<std::string>()).filename()).string());
  } else if (sub == "verify") {
    std::ifstream rf(cfg.at("response_file").get<std::string>());
    if (!rf) throw std::runtime_error("replay: cannot open the original response file");
    std::stringstream ss;
    ss << rf.rdbuf();
    int reward = outcome_reward(ss.str(), cfg.at("label").get<std::string>());
    fs::remove_all(replay_dir);
    if (reward != cfg.at("reward").get<int>()) {
      std::cerr << "replay: verify reward differs\n";
      return 1;
    }
    std::cout << "metrics identical\n";
    return 0;
  } else {
    throw std::runtime_error("replay: unsupported subcommand '" + sub + "'");
  }

  bool all_ok = true;
  for (const auto& name : artifacts) {
    fs::path a = fs::path(orig_dir) / name;
    fs::path b = replay_dir / name;
    bool same = files_identical(a, b);
    if (!same) {
      std::cerr << "replay: artifact differs: " << name << "\n";
      all_ok = false;
    }
  }
  fs::remove_all(replay_dir);
  if (!all_ok) return 1;
  std::cout << "metrics identical\n";
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i]);

  CLI::App app{"desk-scale RLVR trainer with GRPO and verifiable rewards"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic task dataset");
  std::string gen_family = "mod_add";
  int gen_count = 16;
  std::uint64_t gen_seed = 0;
  int gen_mod = 3;
  std::string gen_out;
  gen->add_option("--family", gen_family, "mod_add | digit_sum | small_product");
  gen->add_option("--count", gen_count, "number of examples")->required();
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--mod-base", gen_mod, "modulus for mod_add");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // select-data
  auto* sel = app.add_subcommand("select-data", "rank examples by historical variance");
  std::string sel_history, sel_data, sel_out;
  int sel_topk = 1;
  sel->add_option("--history", sel_history, "history jsonl from a training run")->required();
  sel->add_option("--data", sel_data, "source dataset")->required();
  sel->add_option("--top-k", sel_topk, "how many examples to keep");
  sel->add_option("--out", sel_out, "output dataset path")->required();

  // train
  auto* tr = app.add_subcommand("train", "run the RLVR training loop");
  std::string tr_config;
  bool tr_no_pg = false, tr_no_kl = false, tr_no_entropy = false, tr_no_wd = false;
  bool tr_format_reward = false;
  double tr_entropy_coef = 0.0, tr_label_error = -1.0;
  bool tr_entropy_coef_set = false;
  std::string tr_override_label, tr_out, tr_data;
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  tr->add_option("--config", tr_config, "train config json")->required();
  tr->add_flag("--no-pg", tr_no_pg, "disable the policy gradient term");
  tr->add_flag("--no-kl", tr_no_kl, "disable the KL term");
  tr->add_flag("--no-entropy", tr_no_entropy, "disable the entropy term");
  tr->add_flag("--no-wd", tr_no_wd, "disable weight decay");
  tr->add_option("--entropy-coef", tr_entropy_coef, "override the entropy coefficient")
      ->each([&](const std::string&) { tr_entropy_coef_set = true; });
  tr->add_flag("--format-reward", tr_format_reward, "reward parseability instead of correctness");
  tr->add_option("--label-error-rate", tr_label_error, "fraction of labels to corrupt");
  tr->add_option("--override-label", tr_override_label, "replace every label with this string");
  tr->add_option("--seed", tr_seed, "override the config seed")
      ->each([&](const std::string&) { tr_seed_set = true; });
  tr->add_option("--out", tr_out, "override the output directory");
  tr->add_option("--data", tr_data, "override the dataset path");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a policy checkpoint");
  std::string ev_ckpt, ev_data, ev_out = "report.json";
  int ev_k = 8;
  double ev_temp = 0.6;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "policy checkpoint")->required();
  ev->add_option("--data", ev_data, "evaluation dataset")->required();
  ev->add_option("--k", ev_k, "samples per prompt");
  ev->add_option("--temperature", ev_temp, "sampling temperature (0 = greedy, k must be 1)");
  ev->add_option("--seed", ev_seed, "evaluation seed");
  ev->add_option("--out", ev_out, "report path");

  // verify
  auto* vf = app.add_subcommand("verify", "grade one response file against a label");
  std::string vf_file, vf_label;
  vf->add_option("--response-file", vf_file, "file with the model response text")->required();
  vf->add_option("--label", vf_label, "ground-truth answer")->required();

  // replay
  auto* rp = app.add_subcommand("replay", "re-run a manifest and check artifacts match");
  std::string rp_manifest;
  rp->add_option("--manifest", rp_manifest, "manifest json from a finished run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_family, gen_count, gen_seed, gen_mod, gen_out, args);
    if (sel->parsed()) return cmd_select_data(sel_history, sel_data, sel_topk, sel_out, args);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_k, ev_temp, ev_seed, ev_out, args);
    if (vf->parsed()) return cmd_verify(vf_file, vf_label, args);
    if (rp->parsed()) return cmd_replay(rp_manifest);
    if (tr->parsed()) {
      TrainSpec spec = TrainSpec::from_json_file(tr_config);
      AblationFlags flags;
      flags.no_pg = tr_no_pg;
      flags.no_kl = tr_no_kl;
      flags.no_entropy = tr_no_entropy;
      flags.no_weight_decay = tr_no_wd;
      if (tr_entropy_coef_set) flags.entropy_coef_override = tr_entropy_coef;
      flags.format_reward_mode = tr_format_reward;
      if (!tr_override_label.empty()) flags.label_override = tr_override_label;
      spec.config = apply_ablation(spec.config, flags);
      if (tr_label_error >= 0.0) spec.config.label_error_rate = tr_label_error;
      if (tr_seed_set) spec.config.seed = tr_seed;
      if (!tr_data.empty()) spec.data_path = tr_data;
      // precedence for the output directory: flag, then env, then config
      if (!tr_out.empty()) spec.out_dir = tr_out;
      else if (const char* env = std::getenv("RLVR_OUT_DIR")) spec.out_dir = env;
      if (spec.out_dir.empty()) throw std::invalid_argument("config: out_dir not set");
      if (spec.data_path.empty()) throw std::invalid_argument("config: data not set");
      spec.config.validate();
      if (flags.label_override) {
        // materialize the overridden dataset next to the run so the manifest replays
        Dataset ds = apply_label_override(load_dataset(spec.data_path), *flags.label_override);
        fs::create_directories(spec.out_dir);
        std::string path = spec.out_dir + "/dataset_overridden.jsonl";
        save_dataset(ds, path);
        spec.data_path = path;
      }
      return cmd_train(spec, args);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rlvr::cli
