#include "rlvr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rlvr/grad.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (mini_batches_per_rollout < 1)
    throw std::invalid_argument("train config: mini_batches_per_rollout must be >= 1");
  if (rollout.batch_size % mini_batches_per_rollout != 0)
    throw std::invalid_argument(
        "train config: mini_batches_per_rollout must divide batch_size");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight decay must be >= 0");
  if (checkpoint_every < 1) throw std::invalid_argument("train config: checkpoint_every must be >= 1");
  if (label_error_rate < 0.0 || label_error_rate > 1.0)
    throw std::invalid_argument("train config: label_error_rate must be in [0, 1]");
  loss.validate();
  rollout.validate();
}

TrainConfig apply_ablation(const TrainConfig& config, const AblationFlags& flags) {
  if (flags.entropy_coef_override && flags.no_entropy)
    throw std::invalid_argument(
        "ablation: entropy coefficient override contradicts no_entropy");
  TrainConfig out = config;
  if (flags.no_pg) out.loss.enable_pg = false;
  if (flags.no_kl) out.loss.enable_kl = false;
  if (flags.no_entropy) out.loss.enable_entropy = false;
  if (flags.no_weight_decay) out.enable_weight_decay = false;
  if (flags.entropy_coef_override) out.loss.entropy_coef = *flags.entropy_coef_override;
  if (flags.format_reward_mode) out.rollout.reward_mode = RewardMode::kFormat;
  return out;
}

Dataset apply_label_override(const Dataset& dataset, const std::string& label) {
  Dataset out = dataset;
  for (auto& ex : out.examples) ex.label = label;
  out.provenance += " (label overridden to " + label + ")";
  return out;
}

AdamState AdamState::zeros(const PolicyParams& shape) {
  AdamState s;
  s.m = zeros_like(shape);
  s.v = zeros_like(shape);
  s.t = 0;
  return s;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_block(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                std::vector<double>& v, double lr, double bc1, double bc2, const char* name) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i]))
      throw std::runtime_error(std::string("optimizer_step: non-finite gradient in ") + name);
    m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
    v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

}  // namespace

void optimizer_step(PolicyParams& params, const PolicyParams& grads, double lr,
                    double weight_decay, bool enable_wd, AdamState& state) {
  if (!same_shape(params, grads) || !same_shape(params, state.m))
    throw std::invalid_argument("optimizer_step: shape mismatch");
  if (enable_wd && weight_decay != 0.0) {
    double f = 1.0 - lr * weight_decay;
    for (double& x : params.embedding) x *= f;
    for (double& x : params.mixing) x *= f;
    for (double& x : params.projection) x *= f;
    for (double& x : params.bias) x *= f;
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  adam_block(params.embedding, grads.embedding, state.m.embedding, state.v.embedding, lr, bc1,
             bc2, "embedding");
  adam_block(params.mixing, grads.mixing, state.m.mixing, state.v.mixing, lr, bc1, bc2, "mixing");
  adam_block(params.projection, grads.projection, state.m.projection, state.v.projection, lr,
             bc1, bc2, "projection");
  adam_block(params.bias, grads.bias, state.m.bias, state.v.bias, lr, bc1, bc2, "bias");
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string MetricsRecord::to_json_line() const {
  // doubles rendered at full precision so the line round-trips bitwise
  std::string s = "{\"step\":" + std::to_string(step);
  s += ",\"train_accuracy\":" + format_double(train_accuracy);
  s += ",\"pg_loss\":" + format_double(pg_loss);
  s += ",\"kl_loss\":" + format_double(kl_loss);
  s += ",\"entropy_loss\":" + format_double(entropy_loss);
  s += ",\"total_loss\":" + format_double(total_loss);
  s += ",\"mean_response_length\":" + format_double(mean_response_length);
  s += ",\"checkpoint\":" + nlohmann::json(checkpoint).dump();
  s += "}";
  return s;
}

MetricsRecord MetricsRecord::from_json_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<int>();
  r.train_accuracy = j.at("train_accuracy").get<double>();
  r.pg_loss = j.at("pg_loss").get<double>();
  r.kl_loss = j.at("kl_loss").get<double>();
  r.entropy_loss = j.at("entropy_loss").get<double>();
  r.total_loss = j.at("total_loss").get<double>();
  r.mean_response_length = j.at("mean_response_length").get<double>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  return r;
}

namespace {

constexpr char kStateMagic[8] = {'R', 'L', 'V', 'R', 'T', 'R', 'N', '1'};

void write_params(std::ofstream& f, const PolicyParams& p) {
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(p.vocab_size),
                           static_cast<std::uint32_t>(p.dim),
                           static_cast<std::uint32_t>(p.window)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  auto wr = [&f](const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  wr(p.embedding);
  wr(p.mixing);
  wr(p.projection);
  wr(p.bias);
}

PolicyParams read_params(std::ifstream& f) {
  std::uint32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  PolicyParams p = PolicyParams::zeros(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                                       static_cast<int>(dims[2]));
  auto rd = [&f](std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  rd(p.embedding);
  rd(p.mixing);
  rd(p.projection);
  rd(p.bias);
  return p;
}

}  // namespace

void save_train_state(const TrainState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_train_state: cannot open " + path);
  f.write(kStateMagic, sizeof(kStateMagic));
  write_params(f, state.params);
  write_params(f, state.ref_params);
  write_params(f, state.opt.m);
  write_params(f, state.opt.v);
  std::uint64_t t = state.opt.t;
  std::int64_t next = state.next_step;
  f.write(reinterpret_cast<const char*>(&t), sizeof(t));
  f.write(reinterpret_cast<const char*>(&next), sizeof(next));
  if (!f) throw std::runtime_error("save_train_state: write failed for " + path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_train_state: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kStateMagic, sizeof(kStateMagic)) != 0)
    throw std::runtime_error("load_train_state: bad header in " + path);
  TrainState s;
  s.params = read_params(f);
  s.ref_params = read_params(f);
  s.opt.m = read_params(f);
  s.opt.v = read_params(f);
  std::uint64_t t = 0;
  std::int64_t next = 0;
  f.read(reinterpret_cast<char*>(&t), sizeof(t));
  f.read(reinterpret_cast<char*>(&next), sizeof(next));
  if (!f) throw std::runtime_error("load_train_state: truncated file " + path);
  s.opt.t = t;
  s.next_step = static_cast<int>(next);
  return s;
}

namespace {

Dataset corrupt_labels(const Dataset& dataset, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return dataset;
  Dataset out = dataset;
  Rng rng = derive_stream(seed, {kStreamLabels});
  for (auto& ex : out.examples) {
    if (rng.next_double() < rate) ex.label = perturb_label(ex.label, rng);
  }
  out.provenance += " (label_error_rate applied)";
  return out;
}

std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "state_%06d.bin", step);
  return buf;
}

TrainResult run_steps(const TrainConfig& config, const Dataset& dataset, TrainState state,
                      const std::string& checkpoint_dir, const StepObserver& observer) {
  config.validate();
  validate_dataset(dataset);
  const Vocab vocab = Vocab::standard();

  Dataset working = corrupt_labels(dataset, config.label_error_rate, config.seed);

  const int steps_per_epoch =
      static_cast<int>((working.size() + config.rollout.batch_size - 1) /
                       static_cast<std::size_t>(config.rollout.batch_size));

  TrainResult result;
  AccuracyHistory history;

  const int shard_count = config.mini_batches_per_rollout;

  for (int step = state.next_step; step < config.steps; ++step) {
    PolicyParams old_params = snapshot_policy(state.params);

    Rng batch_rng = derive_stream(config.seed, {kStreamBatch, static_cast<std::uint64_t>(step)});
    std::vector<PromptExample> batch =
        build_batch(working, config.rollout.batch_size, batch_rng);
    std::vector<RolloutGroup> groups =
        rollout_step(old_params, vocab, batch, config.rollout, config.seed,
                     static_cast<std::uint64_t>(step));

    int epoch = step / steps_per_epoch;
    for (const RolloutGroup& g : groups) {
      double mean = 0.0;
      for (double r : g.rewards) mean += r;
      history.record_group(g.prompt_id, epoch, mean / static_cast<double>(g.rewards.size()));
    }

    // Mini-batch updates: whole groups per shard so group statistics stay intact.
    const int groups_per_shard = static_cast<int>(groups.size()) / shard_count;
    LossParts mean_parts;
    double mean_total = 0.0;
    for (int s = 0; s < shard_count; ++s) {
      std::vector<RolloutGroup> shard(groups.begin() + static_cast<long>(s) * groups_per_shard,
                                      groups.begin() + static_cast<long>(s + 1) * groups_per_shard);
      LossParts parts;
      PolicyParams grads =
          loss_gradients(state.params, shard, state.ref_params, old_params, config.loss, &parts);
      optimizer_step(state.params, grads, config.learning_rate, config.weight_decay,
                     config.enable_weight_decay, state.opt);
      mean_parts.pg += parts.pg / shard_count;
      mean_parts.kl += parts.kl / shard_count;
      mean_parts.entropy += parts.entropy / shard_count;
      mean_total += total_loss(parts, config.loss) / shard_count;
    }

    MetricsRecord rec;
    rec.step = step;
    rec.train_accuracy = batch_train_accuracy(groups);
    rec.pg_loss = mean_parts.pg;
    rec.kl_loss = mean_parts.kl;
    rec.entropy_loss = mean_parts.entropy;
    rec.total_loss = mean_total;
    rec.mean_response_length = mean_response_length(groups);

    if (!checkpoint_dir.empty() && (step + 1) % config.checkpoint_every == 0) {
      std::string name = checkpoint_name(step + 1);
      TrainState snap;
      snap.params = state.params;
      snap.ref_params = state.ref_params;
      snap.opt = state.opt;
      snap.next_step = step + 1;
      save_train_state(snap, checkpoint_dir + "/" + name);
      save_policy(state.params, checkpoint_dir + "/policy_" + std::to_string(step + 1) + ".bin");
      rec.checkpoint = name;
      result.checkpoint_files.push_back(name);
    }
    result.metrics.push_back(rec);
    if (observer) observer(step, state.params);
    state.next_step = step + 1;
  }

  result.final_params = state.params;
  result.ref_params = state.ref_params;
  // With cyclic duplication every example is visited every step, so the
  // epoch trace is dense. Shuffle-drawn batches over a larger dataset give
  // no such guarantee and the trace is not recorded.
  if (!history.empty() && working.size() <= static_cast<std::size_t>(config.rollout.batch_size))
    result.accuracy_history = history.finalize();
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const PolicyParams& initial_params, const std::string& checkpoint_dir,
                  const StepObserver& observer) {
  TrainState state;
  state.params = initial_params;
  state.ref_params = snapshot_policy(initial_params);  // frozen step-0 reference
  state.opt = AdamState::zeros(initial_params);
  state.next_step = 0;
  return run_steps(config, dataset, std::move(state), checkpoint_dir, observer);
}

TrainResult resume_train(const TrainConfig& config, const Dataset& dataset, TrainState state,
                         const std::string& checkpoint_dir, const StepObserver& observer) {
  return run_steps(config, dataset, std::move(state), checkpoint_dir, observer);
}

}  // namespace rlvr
