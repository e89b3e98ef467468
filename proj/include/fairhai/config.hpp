/*
 * Copyright 2026 The FairHAI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRHAI_CONFIG_HPP_
#define FAIRHAI_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fairhai/pipeline.hpp"

namespace fairhai {

/// How the one-sided t-test pairs method results.
enum class TtestPairing { seeds, replicates };

/// Experiment settings plus the run-level options that sit above one seed.
struct RunConfig {
  ExperimentConfig experiment;
  std::vector<std::uint64_t> seeds;  // empty means {experiment.seed}
  TtestPairing pairing = TtestPairing::seeds;

  std::vector<std::uint64_t> run_seeds() const {
    return seeds.empty() ? std::vector<std::uint64_t>{experiment.seed} : seeds;
  }

  /// Copy of the experiment re-seeded for one entry of the seed list.
  ExperimentConfig for_seed(std::uint64_t s) const {
    ExperimentConfig c = experiment;
    if (s != c.seed) {
      c.seed = s;
      c.resolve_seeds();
    }
    return c;
  }
};

namespace detail {

inline std::string bad_value(const std::string& key, const std::string& what, const std::string& v) {
  return "key '" + key + "': expected " + what + ", got '" + v + "'";
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(trim(v), out) || !std::isfinite(out)) throw ValidationError(bad_value(key, "a number", v));
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  if (!parse_index(trim(v), out)) throw ValidationError(bad_value(key, "a non-negative integer", v));
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  return static_cast<std::uint64_t>(to_size(key, v));
}

inline bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw ValidationError(bad_value(key, "true or false", v));
}

inline std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto part : split_view(v, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + fmt(xs[i]);
  return out;
}

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeySpec {
  std::string name;  // section.key
  int priority = 1;  // lower runs first
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const RunConfig&)> get;
};

inline void add_stage_keys(std::vector<KeySpec>& keys, const std::string& sec,
                           StageConfig& (*stage)(RunConfig&), const StageConfig& (*cstage)(const RunConfig&)) {
  auto key = [&](const char* k) { return sec + "." + k; };
  auto sgd = [](const std::string& name, RunConfig& r, StageConfig& (*st)(RunConfig&)) -> nn::SgdMomentum& {
    auto* s = std::get_if<nn::SgdMomentum>(&st(r).optimizer.kind);
    if (!s) throw ValidationError("key '" + name + "' requires optimizer = sgd");
    return *s;
  };
  auto adam = [](const std::string& name, RunConfig& r, StageConfig& (*st)(RunConfig&)) -> nn::Adam& {
    auto* a = std::get_if<nn::Adam>(&st(r).optimizer.kind);
    if (!a) throw ValidationError("key '" + name + "' requires optimizer = adam");
    return *a;
  };
  const std::string n_opt = key("optimizer");
  keys.push_back({n_opt, 0,
                  [stage, n_opt](RunConfig& r, const std::string& v) {
                    const auto t = trim(v);
                    if (t == "sgd") {
                      if (!std::holds_alternative<nn::SgdMomentum>(stage(r).optimizer.kind)) {
                        stage(r).optimizer.kind = nn::SgdMomentum{};
                      }
                    } else if (t == "adam") {
                      if (!std::holds_alternative<nn::Adam>(stage(r).optimizer.kind)) {
                        stage(r).optimizer.kind = nn::Adam{};
                      }
                    } else {
                      throw ValidationError(bad_value(n_opt, "sgd or adam", v));
                    }
                  },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    return std::holds_alternative<nn::Adam>(cstage(r).optimizer.kind) ? "adam" : "sgd";
                  }});
  const std::string n_epochs = key("epochs");
  keys.push_back({n_epochs, 1, [stage, n_epochs](RunConfig& r, const std::string& v) { stage(r).epochs = to_size(n_epochs, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> { return std::to_string(cstage(r).epochs); }});
  const std::string n_bs = key("batch_size");
  keys.push_back({n_bs, 1, [stage, n_bs](RunConfig& r, const std::string& v) { stage(r).batch_size = to_size(n_bs, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> { return std::to_string(cstage(r).batch_size); }});
  const std::string n_lr = key("lr");
  keys.push_back({n_lr, 1,
                  [stage, n_lr](RunConfig& r, const std::string& v) { stage(r).optimizer.schedule.initial = to_double(n_lr, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    return format_double(cstage(r).optimizer.schedule.initial);
                  }});
  const std::string n_decay = key("lr_decay");
  keys.push_back({n_decay, 1,
                  [stage, n_decay](RunConfig& r, const std::string& v) { stage(r).optimizer.schedule.decay = to_double(n_decay, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    return format_double(cstage(r).optimizer.schedule.decay);
                  }});
  const std::string n_period = key("lr_period");
  keys.push_back({n_period, 1,
                  [stage, n_period](RunConfig& r, const std::string& v) { stage(r).optimizer.schedule.period = to_size(n_period, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    return std::to_string(cstage(r).optimizer.schedule.period);
                  }});
  const std::string n_mom = key("momentum");
  keys.push_back({n_mom, 1,
                  [stage, n_mom, sgd](RunConfig& r, const std::string& v) { sgd(n_mom, r, stage).momentum = to_double(n_mom, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    const auto* s = std::get_if<nn::SgdMomentum>(&cstage(r).optimizer.kind);
                    return s ? std::optional<std::string>(format_double(s->momentum)) : std::nullopt;
                  }});
  const std::string n_wd = key("weight_decay");
  keys.push_back({n_wd, 1,
                  [stage, n_wd, sgd](RunConfig& r, const std::string& v) { sgd(n_wd, r, stage).weight_decay = to_double(n_wd, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    const auto* s = std::get_if<nn::SgdMomentum>(&cstage(r).optimizer.kind);
                    return s ? std::optional<std::string>(format_double(s->weight_decay)) : std::nullopt;
                  }});
  const std::string n_b1 = key("beta1");
  keys.push_back({n_b1, 1, [stage, n_b1, adam](RunConfig& r, const std::string& v) { adam(n_b1, r, stage).beta1 = to_double(n_b1, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    const auto* a = std::get_if<nn::Adam>(&cstage(r).optimizer.kind);
                    return a ? std::optional<std::string>(format_double(a->beta1)) : std::nullopt;
                  }});
  const std::string n_b2 = key("beta2");
  keys.push_back({n_b2, 1, [stage, n_b2, adam](RunConfig& r, const std::string& v) { adam(n_b2, r, stage).beta2 = to_double(n_b2, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    const auto* a = std::get_if<nn::Adam>(&cstage(r).optimizer.kind);
                    return a ? std::optional<std::string>(format_double(a->beta2)) : std::nullopt;
                  }});
  const std::string n_ae = key("adam_eps");
  keys.push_back({n_ae, 1, [stage, n_ae, adam](RunConfig& r, const std::string& v) { adam(n_ae, r, stage).eps = to_double(n_ae, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> {
                    const auto* a = std::get_if<nn::Adam>(&cstage(r).optimizer.kind);
                    return a ? std::optional<std::string>(format_double(a->eps)) : std::nullopt;
                  }});
  const std::string n_c = key("c");
  keys.push_back({n_c, 1, [stage, n_c](RunConfig& r, const std::string& v) { stage(r).c = to_double(n_c, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> { return format_double(cstage(r).c); }});
  const std::string n_det = key("detach_weights");
  keys.push_back({n_det, 1, [stage, n_det](RunConfig& r, const std::string& v) { stage(r).detach_weights = to_bool(n_det, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> { return fmt_bool(cstage(r).detach_weights); }});
  const std::string n_seed = key("seed");
  keys.push_back({n_seed, 1, [stage, n_seed](RunConfig& r, const std::string& v) { stage(r).seed = to_u64(n_seed, v); },
                  [cstage](const RunConfig& r) -> std::optional<std::string> { return std::to_string(cstage(r).seed); }});
}

inline std::string size_str(std::size_t v) { return std::to_string(v); }

/// Every recognised key, in the order the resolved config is written.
inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> k;
    using Opt = std::optional<std::string>;
    // run
    k.push_back({"run.seed", -1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.seed = to_u64("run.seed", v);
                   r.experiment.resolve_seeds();
                 },
                 [](const RunConfig& r) -> Opt { return std::to_string(r.experiment.seed); }});
    k.push_back({"run.seeds", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.seeds.clear();
                   for (const auto& s : to_list(v)) r.seeds.push_back(to_u64("run.seeds", s));
                 },
                 [](const RunConfig& r) -> Opt {
                   return join(r.run_seeds(), [](std::uint64_t s) { return std::to_string(s); });
                 }});
    k.push_back({"run.methods", 1, [](RunConfig& r, const std::string& v) { r.experiment.methods = to_list(v); },
                 [](const RunConfig& r) -> Opt { return join(r.experiment.methods, [](const std::string& s) { return s; }); }});
    // data
    k.push_back({"data.source", 1,
                 [](RunConfig& r, const std::string& v) {
                   const auto t = trim(v);
                   if (t != "synthetic" && t != "csv") throw ValidationError(bad_value("data.source", "synthetic or csv", v));
                   r.experiment.data.synthetic = t == "synthetic";
                 },
                 [](const RunConfig& r) -> Opt { return r.experiment.data.synthetic ? "synthetic" : "csv"; }});
    k.push_back({"data.benchmark", 1,
                 [](RunConfig& r, const std::string& v) {
                   try {
                     r.experiment.data.benchmark = parse_benchmark(std::string(trim(v)));
                   } catch (const ValidationError&) {
                     throw ValidationError(bad_value("data.benchmark", "unbiased, biased or separable", v));
                   }
                 },
                 [](const RunConfig& r) -> Opt { return to_string(r.experiment.data.benchmark); }});
    k.push_back({"data.samples", 1, [](RunConfig& r, const std::string& v) { r.experiment.data.samples = to_size("data.samples", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.data.samples); }});
    k.push_back({"data.features", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.data.features = to_size("data.features", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.data.features); }});
    k.push_back({"data.csv_path", 1, [](RunConfig& r, const std::string& v) { r.experiment.data.csv_path = std::string(trim(v)); },
                 [](const RunConfig& r) -> Opt { return r.experiment.data.csv_path; }});
    k.push_back({"data.classes", 1, [](RunConfig& r, const std::string& v) { r.experiment.data.classes = to_size("data.classes", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.data.classes); }});
    k.push_back({"data.cohorts", 1, [](RunConfig& r, const std::string& v) { r.experiment.data.cohorts = to_size("data.cohorts", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.data.cohorts); }});
    k.push_back({"data.split", 1,
                 [](RunConfig& r, const std::string& v) {
                   const auto parts = to_list(v);
                   if (parts.size() != 3) throw ValidationError(bad_value("data.split", "three fractions", v));
                   for (std::size_t i = 0; i < 3; ++i) r.experiment.data.split[i] = to_double("data.split", parts[i]);
                 },
                 [](const RunConfig& r) -> Opt {
                   const auto& s = r.experiment.data.split;
                   return format_double(s[0]) + ", " + format_double(s[1]) + ", " + format_double(s[2]);
                 }});
    // experts
    k.push_back({"experts.benchmark", 0,
                 [](RunConfig& r, const std::string& v) {
                   const std::string tag(trim(v));
                   const ExpertSpec d = default_expert_spec(tag);
                   r.experiment.expert_benchmark = tag;
                   r.experiment.experts.accuracies = d.accuracies;
                 },
                 [](const RunConfig& r) -> Opt { return r.experiment.expert_benchmark; }});
    k.push_back({"experts.accuracies", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.experts.accuracies.clear();
                   for (const auto& s : to_list(v)) r.experiment.experts.accuracies.push_back(to_double("experts.accuracies", s));
                 },
                 [](const RunConfig& r) -> Opt { return join(r.experiment.experts.accuracies, format_double); }});
    k.push_back({"experts.annotators", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.experts.annotators = to_size("experts.annotators", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.experts.annotators); }});
    k.push_back({"experts.seed", 1, [](RunConfig& r, const std::string& v) { r.experiment.experts.seed = to_u64("experts.seed", v); },
                 [](const RunConfig& r) -> Opt { return std::to_string(r.experiment.experts.seed); }});
    // arch
    k.push_back({"arch.backbone_hidden", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.arch.backbone_hidden = to_size("arch.backbone_hidden", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.arch.backbone_hidden); }});
    k.push_back({"arch.feature_dim", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.arch.feature_dim = to_size("arch.feature_dim", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.arch.feature_dim); }});
    k.push_back({"arch.gating_hidden", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.arch.gating_hidden = to_size("arch.gating_hidden", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.arch.gating_hidden); }});
    k.push_back({"arch.consolidator_hidden", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.arch.consolidator_hidden = to_size("arch.consolidator_hidden", v);
                 },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.arch.consolidator_hidden); }});
    // stages
    add_stage_keys(k, "step0", [](RunConfig& r) -> StageConfig& { return r.experiment.step0; },
                   [](const RunConfig& r) -> const StageConfig& { return r.experiment.step0; });
    add_stage_keys(k, "step1", [](RunConfig& r) -> StageConfig& { return r.experiment.step1; },
                   [](const RunConfig& r) -> const StageConfig& { return r.experiment.step1; });
    add_stage_keys(k, "step2", [](RunConfig& r) -> StageConfig& { return r.experiment.step2.stage; },
                   [](const RunConfig& r) -> const StageConfig& { return r.experiment.step2.stage; });
    k.push_back({"step2.penalty_initial", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.step2.penalty.initial = to_double("step2.penalty_initial", v);
                 },
                 [](const RunConfig& r) -> Opt { return format_double(r.experiment.step2.penalty.initial); }});
    k.push_back({"step2.penalty_period", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.step2.penalty.period = to_size("step2.penalty_period", v);
                 },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.step2.penalty.period); }});
    k.push_back({"step2.penalty_max", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.step2.penalty.max = to_double("step2.penalty_max", v); },
                 [](const RunConfig& r) -> Opt { return format_double(r.experiment.step2.penalty.max); }});
    k.push_back({"step2.ai_term", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.step2.ai_term = to_bool("step2.ai_term", v); },
                 [](const RunConfig& r) -> Opt { return fmt_bool(r.experiment.step2.ai_term); }});
    k.push_back({"step2.clinician_term", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.step2.clinician_term = to_bool("step2.clinician_term", v);
                 },
                 [](const RunConfig& r) -> Opt { return fmt_bool(r.experiment.step2.clinician_term); }});
    k.push_back({"step2.budget_tolerance", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.step2.budget_tolerance = to_double("step2.budget_tolerance", v);
                 },
                 [](const RunConfig& r) -> Opt { return format_double(r.experiment.step2.budget_tolerance); }});
    k.push_back({"step2.gating_input", 1,
                 [](RunConfig& r, const std::string& v) {
                   const auto t = trim(v);
                   if (t != "raw" && t != "features") throw ValidationError(bad_value("step2.gating_input", "raw or features", v));
                   r.experiment.step2.gating_input = t == "raw" ? GatingInput::raw : GatingInput::features;
                 },
                 [](const RunConfig& r) -> Opt { return r.experiment.step2.gating_input == GatingInput::raw ? "raw" : "features"; }});
    k.push_back({"step2.tie_break", 1,
                 [](RunConfig& r, const std::string& v) {
                   const auto t = trim(v);
                   if (t != "include" && t != "exclude") throw ValidationError(bad_value("step2.tie_break", "include or exclude", v));
                   r.experiment.step2.include_on_tie = t == "include";
                 },
                 [](const RunConfig& r) -> Opt { return r.experiment.step2.include_on_tie ? "include" : "exclude"; }});
    // sweep
    k.push_back({"sweep.epsilons", 1,
                 [](RunConfig& r, const std::string& v) {
                   r.experiment.epsilons.clear();
                   for (const auto& s : to_list(v)) r.experiment.epsilons.push_back(to_double("sweep.epsilons", s));
                 },
                 [](const RunConfig& r) -> Opt { return join(r.experiment.epsilons, format_double); }});
    // eval
    k.push_back({"eval.replicates", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.bootstrap.replicates = to_size("eval.replicates", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.bootstrap.replicates); }});
    k.push_back({"eval.level", 1, [](RunConfig& r, const std::string& v) { r.experiment.bootstrap.level = to_double("eval.level", v); },
                 [](const RunConfig& r) -> Opt { return format_double(r.experiment.bootstrap.level); }});
    k.push_back({"eval.max_retries", 1,
                 [](RunConfig& r, const std::string& v) { r.experiment.bootstrap.max_retries = to_size("eval.max_retries", v); },
                 [](const RunConfig& r) -> Opt { return size_str(r.experiment.bootstrap.max_retries); }});
    k.push_back({"eval.seed", 1, [](RunConfig& r, const std::string& v) { r.experiment.bootstrap.seed = to_u64("eval.seed", v); },
                 [](const RunConfig& r) -> Opt { return std::to_string(r.experiment.bootstrap.seed); }});
    k.push_back({"eval.ttest_pairing", 1,
                 [](RunConfig& r, const std::string& v) {
                   const auto t = trim(v);
                   if (t != "seeds" && t != "replicates") {
                     throw ValidationError(bad_value("eval.ttest_pairing", "seeds or replicates", v));
                   }
                   r.pairing = t == "seeds" ? TtestPairing::seeds : TtestPairing::replicates;
                 },
                 [](const RunConfig& r) -> Opt { return r.pairing == TtestPairing::seeds ? "seeds" : "replicates"; }});
    return k;
  }();
  return keys;
}

inline void validate_run_config(const RunConfig& r) {
  const DataConfig& d = r.experiment.data;
  if (d.synthetic) {
    if (d.samples == 0) throw ValidationError("data.samples must be positive");
    if (d.features == 0) throw ValidationError("data.features must be positive");
  } else if (d.csv_path.empty()) {
    throw ValidationError("data.csv_path is required when data.source = csv");
  }
  if (r.experiment.experts.annotators == 0) throw ValidationError("experts.annotators must be at least 1");
  if (!(r.experiment.bootstrap.level > 0.0 && r.experiment.bootstrap.level < 1.0)) {
    throw ValidationError("eval.level must lie in (0, 1)");
  }
  for (std::size_t i = 1; i < r.seeds.size(); ++i) {
    if (std::find(r.seeds.begin(), r.seeds.begin() + static_cast<std::ptrdiff_t>(i), r.seeds[i]) !=
        r.seeds.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ValidationError("run.seeds must not repeat a seed");
    }
  }
  r.experiment.validate();
}

}  // namespace detail

/// Parses an INI stream. `origin` prefixes every error. A seed override
/// replaces run.seed and run.seeds before any explicit stage seed applies.
inline RunConfig parse_run_config(std::istream& in, const std::string& origin,
                                  std::optional<std::uint64_t> seed_override = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  struct Entry {
    const detail::KeySpec* spec;
    std::string value;
  };
  std::vector<Entry> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ValidationError(origin + ": unknown key '" + section + "'");
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const auto& keys = detail::config_keys();
      const auto it = std::find_if(keys.begin(), keys.end(), [&](const detail::KeySpec& k) { return k.name == name; });
      if (it == keys.end()) throw ValidationError(origin + ": unknown key '" + name + "'");
      entries.push_back({&*it, node.get_value<std::string>()});
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.spec->priority < b.spec->priority; });
  RunConfig r;
  if (seed_override) r.experiment.seed = *seed_override;
  r.experiment.resolve_seeds();
  try {
    for (const auto& e : entries) {
      if (seed_override && (e.spec->name == "run.seed" || e.spec->name == "run.seeds")) continue;
      e.spec->set(r, e.value);
    }
    detail::validate_run_config(r);
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return r;
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open config");
  return parse_run_config(in, path.string(), seed_override);
}

/// Every key with its resolved value; parsing the result yields the same config.
inline std::string to_ini(const RunConfig& r) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : detail::config_keys()) {
    const auto v = k.get(r);
    if (!v) continue;
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << k.name.substr(dot + 1) << " = " << *v << "\n";
  }
  return out.str();
}

}  // namespace fairhai

#endif  // FAIRHAI_CONFIG_HPP_
