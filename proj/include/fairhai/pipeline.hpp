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

#ifndef FAIRHAI_PIPELINE_HPP_
#define FAIRHAI_PIPELINE_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "fairhai/dataset.hpp"
#include "fairhai/evaluation.hpp"
#include "fairhai/experts.hpp"
#include "fairhai/model.hpp"
#include "fairhai/training.hpp"

namespace fairhai {

struct DataConfig {
  bool synthetic = true;
  Benchmark benchmark = Benchmark::biased;
  std::size_t samples = 4000;
  std::size_t features = 8;
  std::string csv_path;
  std::size_t classes = 2;
  std::size_t cohorts = 2;
  std::array<double, 3> split{0.5, 0.25, 0.25};
};

/// Everything one experiment needs. Stage seeds are derived from `seed`
/// by resolve_seeds() unless set explicitly afterwards.
struct ExperimentConfig {
  DataConfig data;
  std::string expert_benchmark = "cmmd-like";
  ExpertSpec experts = default_expert_spec("cmmd-like");
  Architecture arch;
  StageConfig step0 = default_step0_config();
  StageConfig step1 = default_step1_config();
  Step2Config step2 = default_step2_config();
  std::vector<double> epsilons{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  BootstrapOptions bootstrap;
  std::vector<std::string> methods{"pecman", "erm", "fair_l2d"};
  std::uint64_t seed = 1;

  struct Seeds {
    std::uint64_t data, split, experts, step0, step1, step2, eval;
  };

  Seeds seeds() const {
    return Seeds{seed, seed + 1000, seed + 2000, seed + 3000, seed + 4000, seed + 5000, seed + 6000};
  }

  void resolve_seeds() {
    const Seeds s = seeds();
    experts.seed = s.experts;
    step0.seed = s.step0;
    step1.seed = s.step1;
    step2.stage.seed = s.step2;
    bootstrap.seed = s.eval;
  }

  bool has_method(const std::string& m) const {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  }

  void validate() const {
    if (epsilons.empty()) throw ValidationError("sweep.epsilons must not be empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      if (epsilons[i] < 0.0 || epsilons[i] > 1.0) throw ValidationError("sweep.epsilons must lie in [0, 1]");
      if (i > 0 && !(epsilons[i] > epsilons[i - 1])) {
        throw ValidationError("sweep.epsilons must be sorted and unique");
      }
    }
    for (const auto& m : methods) {
      if (m != "pecman" && m != "erm" && m != "fair_l2d") throw ValidationError("run.methods: unknown method '" + m + "'");
    }
    if (methods.empty()) throw ValidationError("run.methods must not be empty");
    experts.validate();
    step0.validate("step0");
    step1.validate("step1");
    step2.stage.validate("step2");
  }
};

// ---------------------------------------------------------------------------
// Stages

/// Synthesizes or ingests the full dataset (annotations untouched).
inline Dataset prepare_data(const ExperimentConfig& cfg) {
  if (cfg.data.synthetic) {
    return synthesize_gaussian_cohorts(
        benchmark_config(cfg.data.benchmark, cfg.data.samples, cfg.data.features, cfg.seeds().data));
  }
  return load_dataset_csv(cfg.data.csv_path, sniff_csv_shape(cfg.data.csv_path, cfg.data.classes, cfg.data.cohorts));
}

/// Adds simulated clinician labels unless the dataset already carries some.
inline Dataset annotate(const Dataset& d, const ExperimentConfig& cfg) {
  if (d.shape().annotators > 0) return d;
  return simulate_annotations(d, cfg.experts);
}

struct TrainedStages {
  ClassifierResult step0;
  std::vector<HeadResult> heads;
  ClassifierResult erm;

  std::vector<nn::NetParams> head_params() const {
    std::vector<nn::NetParams> out;
    for (const auto& h : heads) out.push_back(h.head);
    return out;
  }
};

/// Step 0, Step 1 for every cohort, and the ERM baseline.
inline TrainedStages train_stages(const Split& split, const ExperimentConfig& cfg) {
  TrainedStages t{train_step0(split.train, split.val, cfg.step0, cfg.arch), {}, {}};
  for (std::size_t j = 0; j < split.train.shape().cohorts; ++j) {
    t.heads.push_back(train_step1(split.train, split.val, t.step0.classifier.backbone, j, cfg.step1, cfg.arch));
  }
  if (cfg.has_method("erm")) t.erm = train_erm_baseline(split.train, split.val, cfg.step0, cfg.arch);
  return t;
}

struct SweepResult {
  std::vector<double> epsilons;
  std::vector<PecmanModel> models;
  std::vector<TrainReport> reports;
};

inline SweepResult run_sweep(const Split& split, const nn::NetParams& backbone, const std::vector<nn::NetParams>& heads,
                             const ExperimentConfig& cfg, std::size_t threads) {
  SweepResult s{cfg.epsilons, {}, {}};
  auto results = sweep_step2(split.train, split.val, backbone, heads, cfg.epsilons, cfg.step2, cfg.arch, threads);
  for (std::size_t i = 0; i < results.size(); ++i) {
    s.models.push_back(assemble_model(backbone, heads, results[i], cfg.epsilons[i], cfg.step2));
    s.reports.push_back(std::move(results[i].report));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation

struct TraceRow {
  std::uint64_t id = 0;
  std::size_t attribute = 0;
  std::vector<double> head_scores;  // positive-class probability per head
  std::size_t clinician_label = 0;
  std::vector<double> soft;
  std::vector<std::uint8_t> hard;
  double final_score = 0.0;
  std::size_t final_label = 0;
  std::size_t truth = 0;
};

struct PecmanEvaluation {
  std::vector<OperatingPoint> points;
  std::vector<std::vector<TraceRow>> traces;           // per epsilon model
  std::vector<double> coverages;                       // per epsilon model
  std::vector<std::vector<double>> deferral_rates;     // per epsilon model, A + 1 targets
  std::vector<std::vector<std::vector<double>>> confusion;  // per epsilon model
  std::vector<std::vector<double>> component_auc;      // heads then clinician; cohorts then overall
  std::vector<double> mean_clinician_gate;             // per epsilon model, soft
};

struct MethodResult {
  std::string method;
  EvaluatedCurve curve;
};

struct Evaluation {
  std::vector<MethodResult> methods;
  PecmanEvaluation pecman;
  bool has_pecman = false;

  const MethodResult* find(const std::string& m) const {
    for (const auto& r : methods) if (r.method == m) return &r;
    return nullptr;
  }
};

inline OperatingPoint human_only_point(const std::vector<std::size_t>& users) {
  OperatingPoint p;
  p.coverage = 0.0;
  for (std::size_t u : users) p.scores.push_back(u == 1 ? 1.0 : 0.0);
  return p;
}

inline PecmanEvaluation evaluate_pecman(const SweepResult& sweep, const Dataset& test,
                                        const std::vector<std::size_t>& users) {
  if (sweep.models.empty()) throw ValidationError("evaluate_pecman: no trained models");
  const std::size_t a = test.shape().cohorts;
  const FrozenCases frozen = freeze_cases(sweep.models.front().backbone, sweep.models.front().heads, test);
  PecmanEvaluation ev;
  ev.points.push_back(human_only_point(users));
  std::vector<std::size_t> labels, attrs;
  for (const Sample& s : test.samples()) {
    labels.push_back(s.label);
    attrs.push_back(s.attribute);
  }
  bool has_full = false;
  for (std::size_t e = 0; e < sweep.models.size(); ++e) {
    const auto preds = predict_cases(sweep.models[e], test, frozen, users);
    std::vector<GateDecision> decisions;
    OperatingPoint op;
    op.epsilon = sweep.epsilons[e];
    std::vector<TraceRow> trace;
    double cl = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      decisions.push_back(preds[i].gates);
      op.scores.push_back(preds[i].probs[1]);
      cl += preds[i].gates.soft[a];
      TraceRow row;
      row.id = test[i].id;
      row.attribute = test[i].attribute;
      for (const auto& hp : frozen.head_probs[i]) row.head_scores.push_back(hp[1]);
      row.clinician_label = users[i];
      row.soft = preds[i].gates.soft;
      row.hard = preds[i].gates.hard;
      row.final_score = preds[i].probs[1];
      row.final_label = static_cast<std::size_t>(
          std::max_element(preds[i].probs.begin(), preds[i].probs.end()) - preds[i].probs.begin());
      row.truth = test[i].label;
      trace.push_back(std::move(row));
    }
    op.coverage = realized_coverage(decisions);
    has_full = has_full || op.coverage == 1.0;
    ev.coverages.push_back(op.coverage);
    ev.mean_clinician_gate.push_back(cl / static_cast<double>(test.size()));
    ev.deferral_rates.push_back(deferral_distribution(decisions));
    ev.confusion.push_back(deferral_confusion(decisions, attrs, a));
    ev.traces.push_back(std::move(trace));
    ev.points.push_back(std::move(op));
  }
  if (!has_full) {
    // AI-only endpoint: the largest-budget model with its clinician gate held off.
    const PecmanModel& m = sweep.models.back();
    OperatingPoint op;
    op.epsilon = sweep.epsilons.back();
    op.coverage = 1.0;
    const std::vector<double> no_user(test.shape().classes, 0.0);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto soft = soft_gates(m, test[i].features, frozen.features[i]);
      std::vector<double> g = soft;
      const GateDecision d = harden(soft, m.include_on_tie);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = j < a ? d.hard[j] : 0.0;
      op.scores.push_back(nn::predict(m.consolidator, consolidator_input(frozen.head_probs[i], g, no_user))[1]);
    }
    ev.points.push_back(std::move(op));
  }
  std::vector<std::vector<double>> comps(a + 1);
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t j = 0; j < a; ++j) comps[j].push_back(frozen.head_probs[i][j][1]);
    comps[a].push_back(users[i] == 1 ? 1.0 : 0.0);
  }
  ev.component_auc = component_auc_table(comps, labels, attrs, a);
  return ev;
}

inline std::vector<OperatingPoint> erm_points(const Classifier& erm, const Dataset& test,
                                              const std::vector<std::size_t>& users) {
  std::vector<OperatingPoint> pts{human_only_point(users)};
  OperatingPoint ai;
  ai.coverage = 1.0;
  ai.scores = score_classifier(erm, test).scores;
  pts.push_back(std::move(ai));
  return pts;
}

inline std::vector<OperatingPoint> fair_l2d_points(const Classifier& fair, const Dataset& val, const Dataset& test,
                                                   const std::vector<std::size_t>& users,
                                                   const std::vector<double>& epsilons) {
  std::vector<OperatingPoint> pts{human_only_point(users)};
  bool has_full = false;
  for (double eps : epsilons) {
    const FairL2D m = calibrate_fair_l2d(fair, val, eps);
    const auto preds = predict_fair_l2d(m, test, users);
    OperatingPoint op;
    op.epsilon = eps;
    std::size_t kept = 0;
    for (const auto& p : preds) {
      op.scores.push_back(p.score);
      kept += p.deferred ? 0 : 1;
    }
    op.coverage = static_cast<double>(kept) / static_cast<double>(preds.size());
    has_full = has_full || op.coverage == 1.0;
    pts.push_back(std::move(op));
  }
  if (!has_full) {
    OperatingPoint ai;
    ai.coverage = 1.0;
    ai.scores = score_classifier(fair, test).scores;
    pts.push_back(std::move(ai));
  }
  return pts;
}

inline Evaluation evaluate_methods(const ExperimentConfig& cfg, const Split& split, const TrainedStages& stages,
                                   const SweepResult* sweep) {
  Evaluation ev;
  const Dataset& test = split.test;
  detail::check_binary(test, "eval");
  const auto users = clinician_labels(test, cfg.bootstrap.seed);
  std::vector<std::size_t> labels, attrs;
  for (const Sample& s : test.samples()) {
    labels.push_back(s.label);
    attrs.push_back(s.attribute);
  }
  for (const auto& m : cfg.methods) {
    std::vector<OperatingPoint> pts;
    if (m == "pecman") {
      if (!sweep) throw ValidationError("eval: pecman requested but no Step 2 models are available");
      ev.pecman = evaluate_pecman(*sweep, test, users);
      ev.has_pecman = true;
      pts = ev.pecman.points;
    } else if (m == "erm") {
      pts = erm_points(stages.erm.classifier, test, users);
    } else if (m == "fair_l2d") {
      pts = fair_l2d_points(stages.step0.classifier, split.val, test, users, cfg.epsilons);
    }
    ev.methods.push_back(MethodResult{m, evaluate_curve(std::move(pts), labels, attrs, cfg.bootstrap)});
  }
  return ev;
}

/// In-memory end-to-end run: data, experts, all stages, sweep, evaluation.
struct ExperimentResult {
  Dataset dataset;
  Split split;
  TrainedStages stages;
  SweepResult sweep;
  Evaluation evaluation;
};

/// Seeds are used as configured; call resolve_seeds() first to derive them
/// from the global seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 0) {
  cfg.validate();
  Dataset full = annotate(prepare_data(cfg), cfg);
  Split split = stratified_split(full, cfg.data.split, cfg.seeds().split);
  TrainedStages stages = train_stages(split, cfg);
  SweepResult sweep;
  if (cfg.has_method("pecman")) {
    sweep = run_sweep(split, stages.step0.classifier.backbone, stages.head_params(), cfg, threads);
  }
  Evaluation ev = evaluate_methods(cfg, split, stages, cfg.has_method("pecman") ? &sweep : nullptr);
  return ExperimentResult{std::move(full), std::move(split), std::move(stages), std::move(sweep), std::move(ev)};
}

}  // namespace fairhai

#endif  // FAIRHAI_PIPELINE_HPP_
