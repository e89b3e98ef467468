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

#ifndef FAIRHAI_MODEL_HPP_
#define FAIRHAI_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairhai/error.hpp"
#include "fairhai/losses.hpp"
#include "fairhai/network.hpp"

namespace fairhai {

enum class GatingInput { raw, features };

/// Layer widths of the four networks.
struct Architecture {
  std::size_t backbone_hidden = 64;
  std::size_t feature_dim = 32;
  std::size_t gating_hidden = 16;
  std::size_t consolidator_hidden = 0;  // 0 means 4 * K
};

/// Backbone f, cohort heads h_j, gating g over A + 1 targets (the last is
/// the clinician), and consolidator m.
struct PecmanModel {
  nn::NetParams backbone;
  std::vector<nn::NetParams> heads;
  nn::NetParams gating;
  nn::NetParams consolidator;
  double trained_epsilon = 0.0;
  GatingInput gating_input = GatingInput::raw;
  /// round(0.5) -> 1 when true.
  bool include_on_tie = true;

  std::size_t cohorts() const { return heads.size(); }
  std::size_t classes() const { return consolidator.output_dim(); }
  std::size_t input_dim() const { return backbone.input_dim(); }

  void validate() const {
    backbone.validate();
    gating.validate();
    consolidator.validate();
    if (heads.empty()) throw ShapeError("model needs at least one cohort head");
    const std::size_t k = consolidator.output_dim();
    for (std::size_t j = 0; j < heads.size(); ++j) {
      heads[j].validate();
      if (heads[j].input_dim() != backbone.output_dim() || heads[j].output_dim() != k) {
        throw ShapeError("head " + std::to_string(j) + " does not map backbone features to K classes");
      }
    }
    if (gating.output_dim() != heads.size() + 1) throw ShapeError("gating must emit A + 1 outputs");
    const std::size_t gate_in = gating_input == GatingInput::raw ? backbone.input_dim() : backbone.output_dim();
    if (gating.input_dim() != gate_in) throw ShapeError("gating input width does not match its source");
    if (consolidator.input_dim() != (heads.size() + 1) * k) {
      throw ShapeError("consolidator input must be (A + 1) * K");
    }
    if (trained_epsilon < 0.0 || trained_epsilon > 1.0) throw ShapeError("trained epsilon outside [0, 1]");
  }

  bool operator==(const PecmanModel&) const = default;
};

inline nn::NetParams make_backbone(std::size_t features, const Architecture& arch, std::uint64_t seed) {
  return nn::make_mlp({features, arch.backbone_hidden, arch.feature_dim}, nn::Activation::relu,
                      nn::Activation::relu, seed);
}

inline nn::NetParams make_head(const Architecture& arch, std::size_t classes, std::uint64_t seed) {
  return nn::make_mlp({arch.feature_dim, classes}, nn::Activation::identity, nn::Activation::softmax, seed);
}

inline nn::NetParams make_gating(std::size_t inputs, std::size_t cohorts, const Architecture& arch,
                                 std::uint64_t seed) {
  return nn::make_mlp({inputs, arch.gating_hidden, cohorts + 1}, nn::Activation::relu,
                      nn::Activation::sigmoid, seed);
}

inline nn::NetParams make_consolidator(std::size_t cohorts, std::size_t classes, const Architecture& arch,
                                       std::uint64_t seed) {
  const std::size_t hidden = arch.consolidator_hidden ? arch.consolidator_hidden : 4 * classes;
  return nn::make_mlp({(cohorts + 1) * classes, hidden, classes}, nn::Activation::relu,
                      nn::Activation::softmax, seed);
}

struct GateDecision {
  std::vector<double> soft;
  std::vector<std::uint8_t> hard;

  bool clinician() const { return hard.back() != 0; }
};

inline GateDecision harden(std::vector<double> soft, bool include_on_tie = true) {
  GateDecision g;
  g.hard.resize(soft.size());
  for (std::size_t j = 0; j < soft.size(); ++j) {
    g.hard[j] = include_on_tie ? (soft[j] >= 0.5) : (soft[j] > 0.5);
  }
  g.soft = std::move(soft);
  return g;
}

inline std::vector<double> backbone_features(const PecmanModel& model, std::span<const double> x) {
  return nn::predict(model.backbone, x);
}

inline std::vector<double> head_predict(const PecmanModel& model, std::size_t j, std::span<const double> x) {
  if (j >= model.heads.size()) {
    throw ValidationError("head index " + std::to_string(j) + " out of range (A=" +
                          std::to_string(model.heads.size()) + ")");
  }
  return nn::predict(model.heads[j], backbone_features(model, x));
}

/// Gate activations for one case given its raw input and backbone features.
inline std::vector<double> soft_gates(const PecmanModel& model, std::span<const double> x,
                                      std::span<const double> features) {
  return nn::predict(model.gating, model.gating_input == GatingInput::raw ? x : features);
}

inline GateDecision gate(const PecmanModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) throw ShapeError("gate: input width mismatch");
  std::vector<double> feats;
  if (model.gating_input == GatingInput::features) feats = backbone_features(model, x);
  return harden(soft_gates(model, x, feats), model.include_on_tie);
}

/// Consolidator input [g_1 h_1, ..., g_A h_A, g_{A+1} y_hat].
inline std::vector<double> consolidator_input(std::span<const std::vector<double>> head_probs,
                                              std::span<const double> gates, std::span<const double> user) {
  const std::size_t a = head_probs.size();
  const std::size_t k = user.size();
  if (gates.size() != a + 1) throw ShapeError("consolidator_input: need A + 1 gates");
  std::vector<double> z((a + 1) * k);
  for (std::size_t j = 0; j < a; ++j) {
    if (head_probs[j].size() != k) throw ShapeError("consolidator_input: head output width mismatch");
    for (std::size_t c = 0; c < k; ++c) z[j * k + c] = gates[j] * head_probs[j][c];
  }
  for (std::size_t c = 0; c < k; ++c) z[a * k + c] = gates[a] * user[c];
  return z;
}

inline std::vector<std::vector<double>> all_head_probs(const PecmanModel& model, std::span<const double> features) {
  std::vector<std::vector<double>> out;
  out.reserve(model.heads.size());
  for (const auto& h : model.heads) out.push_back(nn::predict(h, features));
  return out;
}

inline void check_user_label(const PecmanModel& model, std::span<const double> user) {
  if (user.size() != model.classes()) throw ShapeError("user label must be one-hot over K classes");
  double s = 0.0;
  for (double v : user) {
    if (v != 0.0 && v != 1.0) throw ValidationError("user label must be one-hot");
    s += v;
  }
  if (s != 1.0) throw ValidationError("user label must be one-hot");
}

/// Training-time prediction: inputs weighted by the soft gates.
inline std::vector<double> consolidate_soft(const PecmanModel& model, std::span<const double> x,
                                            std::span<const double> user) {
  check_user_label(model, user);
  const auto feats = backbone_features(model, x);
  const auto heads = all_head_probs(model, feats);
  const auto g = soft_gates(model, x, feats);
  return nn::predict(model.consolidator, consolidator_input(heads, g, user));
}

struct HardPrediction {
  std::vector<double> probs;
  GateDecision gates;
};

/// Test-time prediction from precomputed backbone features and head outputs.
inline HardPrediction consolidate_hard_cached(const PecmanModel& model, std::span<const double> x,
                                              std::span<const double> features,
                                              std::span<const std::vector<double>> heads,
                                              std::span<const double> user) {
  HardPrediction out;
  out.gates = harden(soft_gates(model, x, features), model.include_on_tie);
  std::vector<double> g(out.gates.hard.begin(), out.gates.hard.end());
  out.probs = nn::predict(model.consolidator, consolidator_input(heads, g, user));
  return out;
}

/// Test-time prediction: inputs weighted by the rounded gates, so the user
/// label reaches the consolidator only when the clinician gate is set.
inline HardPrediction consolidate_hard(const PecmanModel& model, std::span<const double> x,
                                       std::span<const double> user) {
  check_user_label(model, user);
  const auto feats = backbone_features(model, x);
  const auto heads = all_head_probs(model, feats);
  return consolidate_hard_cached(model, x, feats, heads, user);
}

// ---------------------------------------------------------------------------
// Bundle directory: one checkpoint per network plus manifest.txt.

inline void save_model_bundle(const PecmanModel& model, const std::filesystem::path& dir) {
  model.validate();
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(model.backbone, (dir / "backbone.fhai").string());
  for (std::size_t j = 0; j < model.heads.size(); ++j) {
    nn::save_checkpoint(model.heads[j], (dir / ("head_" + std::to_string(j) + ".fhai")).string());
  }
  nn::save_checkpoint(model.gating, (dir / "gating.fhai").string());
  nn::save_checkpoint(model.consolidator, (dir / "consolidator.fhai").string());
  std::ofstream m(dir / "manifest.txt", std::ios::binary);
  m << "fairhai-model 1\n";
  m << "features " << model.input_dim() << "\n";
  m << "feature_dim " << model.backbone.output_dim() << "\n";
  m << "cohorts " << model.cohorts() << "\n";
  m << "classes " << model.classes() << "\n";
  m << "epsilon " << detail::format_double(model.trained_epsilon) << "\n";
  m << "gating_input " << (model.gating_input == GatingInput::raw ? "raw" : "features") << "\n";
  m << "tie_break " << (model.include_on_tie ? "include" : "exclude") << "\n";
  m << "backbone backbone.fhai\n";
  for (std::size_t j = 0; j < model.heads.size(); ++j) m << "head " << j << " head_" << j << ".fhai\n";
  m << "gating gating.fhai\n";
  m << "consolidator consolidator.fhai\n";
  if (!m) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
}

inline PecmanModel load_model_bundle(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.txt");
  if (!m) throw SchemaError((dir / "manifest.txt").string() + ": model manifest not found");
  std::string line;
  std::getline(m, line);
  if (line != "fairhai-model 1") throw SchemaError((dir / "manifest.txt").string() + ": bad header");
  PecmanModel model;
  std::size_t cohorts = 0;
  std::vector<std::string> head_files;
  while (std::getline(m, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "cohorts") {
      ls >> cohorts;
      head_files.resize(cohorts);
    } else if (key == "epsilon") {
      std::string v;
      ls >> v;
      if (!detail::parse_double(v, model.trained_epsilon)) throw SchemaError("model manifest: bad epsilon");
    } else if (key == "gating_input") {
      std::string v;
      ls >> v;
      model.gating_input = v == "features" ? GatingInput::features : GatingInput::raw;
    } else if (key == "tie_break") {
      std::string v;
      ls >> v;
      model.include_on_tie = v != "exclude";
    } else if (key == "backbone") {
      std::string f;
      ls >> f;
      model.backbone = nn::load_checkpoint((dir / f).string());
    } else if (key == "head") {
      std::size_t j = 0;
      std::string f;
      ls >> j >> f;
      if (j >= head_files.size()) throw SchemaError("model manifest: head index out of range");
      head_files[j] = f;
    } else if (key == "gating") {
      std::string f;
      ls >> f;
      model.gating = nn::load_checkpoint((dir / f).string());
    } else if (key == "consolidator") {
      std::string f;
      ls >> f;
      model.consolidator = nn::load_checkpoint((dir / f).string());
    }
  }
  for (std::size_t j = 0; j < head_files.size(); ++j) {
    if (head_files[j].empty()) throw SchemaError("model manifest: head " + std::to_string(j) + " missing");
    model.heads.push_back(nn::load_checkpoint((dir / head_files[j]).string()));
  }
  try {
    model.validate();
  } catch (const ShapeError& e) {
    throw SchemaError(dir.string() + ": " + e.what());
  }
  return model;
}

}  // namespace fairhai

#endif  // FAIRHAI_MODEL_HPP_
