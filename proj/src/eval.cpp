#include "rlvr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rlvr/rng.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

const std::vector<std::string> kDefaultReflectionWords = {"rethink", "recheck", "recalculate"};

namespace {

struct Tally {
  int prompts = 0;
  int correct_samples = 0;
  int boxed_samples = 0;
  int samples = 0;
  int prompts_with_hit = 0;
  double pass1_sum = 0.0;
  double length_sum = 0.0;
  std::vector<std::string> texts;
};

EvalReport report_from(const Tally& t, int k) {
  EvalReport r;
  r.prompts = t.prompts;
  r.samples_per_prompt = k;
  if (t.prompts > 0) {
    r.pass1_avg_k = t.pass1_sum / t.prompts;
    r.pass_n = static_cast<double>(t.prompts_with_hit) / t.prompts;
  }
  if (t.samples > 0) {
    r.boxed_ratio = static_cast<double>(t.boxed_samples) / t.samples;
    r.mean_response_length = t.length_sum / t.samples;
  }
  r.reflection_counts = count_reflection_words(t.texts);
  return r;
}

}  // namespace

EvalReport evaluate(const PolicyParams& params, const Vocab& vocab, const Dataset& dataset,
                    int k, double temperature, std::uint64_t seed, int max_len) {
  if (k < 1) throw std::invalid_argument("evaluate: k must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("evaluate: negative temperature");
  if (temperature == 0.0 && k != 1)
    throw std::invalid_argument("evaluate: greedy decoding requires k == 1");
  validate_dataset(dataset);

  Tally all;
  std::map<std::string, Tally> per_cat;

  for (std::size_t p = 0; p < dataset.size(); ++p) {
    const PromptExample& ex = dataset[p];
    std::vector<int> prompt_ids = vocab.encode(ex.prompt);
    Rng rng = derive_stream(seed, {kStreamEval, static_cast<std::uint64_t>(p)});

    int correct = 0;
    Tally* cat = &per_cat[ex.category];
    for (int i = 0; i < k; ++i) {
      TokenSequence resp = temperature == 0.0
                               ? greedy_response(params, prompt_ids, max_len)
                               : sample_response(params, prompt_ids, temperature, max_len, rng);
      std::string text = vocab.decode(resp.ids);
      int hit = outcome_reward(text, ex.label);
      int boxed = format_reward(text);
      correct += hit;
      for (Tally* t : {&all, cat}) {
        t->samples += 1;
        t->correct_samples += hit;
        t->boxed_samples += boxed;
        t->length_sum += static_cast<double>(resp.ids.size());
        t->texts.push_back(text);
      }
    }
    for (Tally* t : {&all, cat}) {
      t->prompts += 1;
      t->pass1_sum += static_cast<double>(correct) / k;
      if (correct > 0) t->prompts_with_hit += 1;
    }
  }

  EvalReport report = report_from(all, k);
  for (const auto& [cat, tally] : per_cat) report.per_category[cat] = report_from(tally, k);
  return report;
}

std::map<std::string, int> count_reflection_words(const std::vector<std::string>& responses,
                                                  const std::vector<std::string>& words) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  std::map<std::string, int> counts;
  std::vector<std::string> needles;
  needles.reserve(words.size());
  for (const auto& w : words) {
    counts[w] = 0;
    needles.push_back(lower(w));
  }
  for (const auto& resp : responses) {
    std::string text = lower(resp);
    for (std::size_t i = 0; i < words.size(); ++i)
      if (text.find(needles[i]) != std::string::npos) counts[words[i]] += 1;
  }
  return counts;
}

std::optional<PostSaturation> detect_post_saturation(const std::vector<double>& train_acc,
                                                     const std::vector<double>& heldout_acc,
                                                     double sat_threshold, int window) {
  if (train_acc.size() != heldout_acc.size())
    throw std::invalid_argument("detect_post_saturation: series must be aligned");
  if (window < 1) throw std::invalid_argument("detect_post_saturation: window must be >= 1");
  const int n = static_cast<int>(train_acc.size());

  int sat = -1;
  double rolling = 0.0;
  for (int i = 0; i < n; ++i) {
    rolling += train_acc[i];
    if (i >= window) rolling -= train_acc[i - window];
    if (i >= window - 1 && rolling / window >= sat_threshold) {
      sat = i;
      break;
    }
  }
  if (sat < 0) return std::nullopt;

  PostSaturation out;
  out.saturation_step = sat;
  out.best_heldout_step = sat;
  double best = heldout_acc[sat];
  for (int i = sat + 1; i < n; ++i) {
    if (heldout_acc[i] > best) {
      best = heldout_acc[i];
      out.best_heldout_step = i;
    }
  }
  out.post_sat_gain = best - heldout_acc[sat];
  return out;
}

namespace {

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j = {
      {"pass1_avg_k", r.pass1_avg_k},
      {"pass_n", r.pass_n},
      {"boxed_ratio", r.boxed_ratio},
      {"mean_response_length", r.mean_response_length},
      {"reflection_counts", r.reflection_counts},
      {"prompts", r.prompts},
      {"samples_per_prompt", r.samples_per_prompt},
  };
  if (!r.per_category.empty()) {
    nlohmann::json cats;
    for (const auto& [name, sub] : r.per_category) cats[name] = report_json(sub);
    j["per_category"] = cats;
  }
  return j;
}

}  // namespace

void save_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_report: cannot open " + path);
  f << report_json(report).dump(2) << "\n";
}

}  // namespace rlvr
