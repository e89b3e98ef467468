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

#ifndef FAIRHAI_TRAINING_HPP_
#define FAIRHAI_TRAINING_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "fairhai/dataset.hpp"
#include "fairhai/error.hpp"
#include "fairhai/evaluation.hpp"
#include "fairhai/experts.hpp"
#include "fairhai/losses.hpp"
#include "fairhai/model.hpp"
#include "fairhai/network.hpp"

namespace fairhai {

/// Epochs, batching, optimizer, and FIS blend for one training stage.
struct StageConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  nn::OptimizerConfig optimizer;
  double c = 0.5;
  bool detach_weights = false;
  std::uint64_t seed = 0;

  void validate(const char* stage) const {
    if (batch_size < 2) throw ValidationError(std::string(stage) + ": batch_size must be at least 2");
    if (c < 0.0 || c > 1.0) throw ValidationError(std::string(stage) + ": c must lie in [0, 1]");
    optimizer.validate();
  }
};

struct Step2Config {
  StageConfig stage;
  PenaltySchedule penalty;
  bool ai_term = true;
  bool clinician_term = true;
  /// Slack on the validation soft-gate budget used for checkpoint selection.
  double budget_tolerance = 0.02;
  GatingInput gating_input = GatingInput::raw;
  bool include_on_tie = true;
};

/// Adam at 1e-3 decayed x0.1 every 10 epochs, 30 epochs, c = 0.5.
inline StageConfig default_step0_config() {
  StageConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.c = 0.5;
  cfg.optimizer.kind = nn::Adam{};
  cfg.optimizer.schedule = nn::LrSchedule{1e-3, 0.1, 10};
  return cfg;
}

/// SGD (momentum 0.9, weight decay 5e-4) on a fresh head, lr 0.1, c = 0, 30 epochs.
inline StageConfig default_step1_config() {
  StageConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.c = 0.0;
  cfg.optimizer.kind = nn::SgdMomentum{0.9, 5e-4};
  cfg.optimizer.schedule = nn::LrSchedule{0.1, 1.0, 0};
  return cfg;
}

/// SGD (momentum 0.9, weight decay 5e-4) at 0.01 for 60 epochs, c = 0.5.
inline Step2Config default_step2_config() {
  Step2Config cfg;
  cfg.stage.epochs = 60;
  cfg.stage.batch_size = 64;
  cfg.stage.c = 0.5;
  cfg.stage.optimizer.kind = nn::SgdMomentum{0.9, 5e-4};
  cfg.stage.optimizer.schedule = nn::LrSchedule{0.01, 1.0, 0};
  return cfg;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_esauc = 0.0;
  double ai_gate_mass = std::numeric_limits<double>::quiet_NaN();
  double clinician_gate_mass = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const EpochRecord& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return epoch == o.epoch && same(train_loss, o.train_loss) && same(val_auc, o.val_auc) &&
           same(val_esauc, o.val_esauc) && same(ai_gate_mass, o.ai_gate_mass) &&
           same(clinician_gate_mass, o.clinician_gate_mass);
  }
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  /// Step 2 only: the selected checkpoint meets the soft budget.
  bool budget_satisfied = true;
  double wall_clock_seconds = 0.0;
};

inline void write_train_report_csv(const TrainReport& r, std::ostream& out) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : detail::format_double(v); };
  out << "epoch,train_loss,val_auc,val_esauc,ai_gate_mass,clinician_gate_mass\n";
  for (const auto& e : r.epochs) {
    out << e.epoch << ',' << cell(e.train_loss) << ',' << cell(e.val_auc) << ',' << cell(e.val_esauc) << ','
        << cell(e.ai_gate_mass) << ',' << cell(e.clinician_gate_mass) << '\n';
  }
}

inline void write_train_report_csv(const TrainReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_train_report_csv(r, out);
}

// ---------------------------------------------------------------------------
// Single classifier (Step 0, ERM)

/// Backbone plus one softmax head.
struct Classifier {
  nn::NetParams backbone;
  nn::NetParams head;

  std::vector<double> predict(std::span<const double> x) const {
    return nn::predict(head, nn::predict(backbone, x));
  }

  bool operator==(const Classifier&) const = default;
};

enum class Weighting {
  fis,   // FIS loss
  mean,  // uniform 1/|B| weights (ERM)
};

struct BatchLoss {
  double loss = 0.0;
  std::vector<double> grad_loss;  // d loss / d per-sample cross-entropy
};

inline BatchLoss weighted_batch_loss(std::span<const double> losses, std::span<const std::size_t> cohorts,
                                     std::size_t num_cohorts, Weighting w, const FisOptions& fis,
                                     double normalizer) {
  BatchLoss out;
  if (w == Weighting::mean) {
    // Uniform 1/|B| weights in place of s^I and s^G, same normalizer as FIS.
    const double weight = 1.0 / static_cast<double>(losses.size());
    double sum = 0.0;
    for (double l : losses) sum += weight * l;
    out.loss = sum / normalizer;
    out.grad_loss.assign(losses.size(), weight / normalizer);
    return out;
  }
  FisResult r = fis_from_losses(losses, cohorts, num_cohorts, fis, normalizer);
  out.loss = r.total;
  out.grad_loss = std::move(r.grad_loss);
  return out;
}

struct ClassifierGradient {
  double loss = 0.0;
  nn::GradientSet backbone;
  nn::GradientSet head;
};

/// Batch objective of Step 0 / ERM and its gradient for backbone and head.
inline ClassifierGradient classifier_batch_gradient(const Classifier& clf, const Dataset& data,
                                                    std::span<const std::size_t> batch, Weighting weighting,
                                                    const FisOptions& fis) {
  const std::size_t n = batch.size();
  std::vector<nn::ForwardResult> fb(n), fh(n);
  std::vector<double> losses(n);
  std::vector<std::size_t> cohorts(n);
  for (std::size_t b = 0; b < n; ++b) {
    const Sample& s = data[batch[b]];
    fb[b] = nn::forward(clf.backbone, s.features);
    fh[b] = nn::forward(clf.head, fb[b].output);
    losses[b] = bce(fh[b].output, s.label);
    cohorts[b] = s.attribute;
  }
  const BatchLoss bl = weighted_batch_loss(losses, cohorts, data.shape().cohorts, weighting, fis,
                                           static_cast<double>(n));
  ClassifierGradient g{bl.loss, nn::GradientSet::zeros(clf.backbone), nn::GradientSet::zeros(clf.head)};
  for (std::size_t b = 0; b < n; ++b) {
    auto up = bce_grad(fh[b].output, data[batch[b]].label);
    for (double& v : up) v *= bl.grad_loss[b];
    const auto dfeat = nn::backward_into(clf.head, fh[b].cache, up, g.head);
    nn::backward_into(clf.backbone, fb[b].cache, dfeat, g.backbone);
  }
  return g;
}

/// Forward-only objective, for finite-difference checks.
inline double classifier_batch_loss(const Classifier& clf, const Dataset& data, std::span<const std::size_t> batch,
                                    Weighting weighting, const FisOptions& fis) {
  std::vector<double> losses;
  std::vector<std::size_t> cohorts;
  for (std::size_t i : batch) {
    losses.push_back(bce(clf.predict(data[i].features), data[i].label));
    cohorts.push_back(data[i].attribute);
  }
  return weighted_batch_loss(losses, cohorts, data.shape().cohorts, weighting, fis,
                             static_cast<double>(batch.size()))
      .loss;
}

inline ScoredSet score_classifier(const Classifier& clf, const Dataset& d) {
  ScoredSet s;
  for (const Sample& x : d.samples()) {
    s.scores.push_back(clf.predict(x.features)[1]);
    s.labels.push_back(x.label);
    s.attributes.push_back(x.attribute);
  }
  return s;
}

namespace detail {

inline void check_finite(double loss, const char* stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(stage) + ": loss became non-finite at epoch " + std::to_string(epoch) +
                        " (try a smaller learning rate)");
  }
}

inline void check_binary(const Dataset& d, const char* stage) {
  if (d.shape().classes != 2) throw ValidationError(std::string(stage) + ": evaluation requires K = 2");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

struct ClassifierResult {
  Classifier classifier;
  TrainReport report;
};

/// Joint backbone + head training; returns the epoch with the best
/// validation ES-AUC.
inline ClassifierResult train_classifier(const Dataset& train, const Dataset& val, const StageConfig& cfg,
                                         const Architecture& arch, Weighting weighting, const char* stage) {
  cfg.validate(stage);
  detail::check_binary(train, stage);
  if (train.shape() != val.shape()) throw ValidationError(std::string(stage) + ": train/val shapes differ");
  const auto t0 = std::chrono::steady_clock::now();
  Classifier clf{make_backbone(train.shape().features, arch, cfg.seed),
                 make_head(arch, train.shape().classes, cfg.seed + 1)};
  ClassifierResult res{clf, {}};
  nn::OptimizerState opt_b(cfg.optimizer, clf.backbone);
  nn::OptimizerState opt_h(cfg.optimizer, clf.head);
  const FisOptions fis{cfg.c, cfg.detach_weights};
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    const auto plan = batches(train, cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch : plan) {
      const ClassifierGradient g = classifier_batch_gradient(clf, train, batch, weighting, fis);
      detail::check_finite(g.loss, stage, epoch);
      sum += g.loss;
      opt_b.apply(clf.backbone, g.backbone, epoch);
      opt_h.apply(clf.head, g.head, epoch);
    }
    const ScoredSet vs = score_classifier(clf, val);
    const CohortAuc ca = cohort_aucs(vs);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(plan.size());
    rec.val_auc = ca.overall;
    rec.val_esauc = es_auc_from(ca);
    res.report.epochs.push_back(rec);
    if (rec.val_esauc > best) {
      best = rec.val_esauc;
      res.classifier = clf;
      res.report.selected_epoch = epoch;
    }
  }
  res.report.wall_clock_seconds = detail::seconds_since(t0);
  return res;
}

/// Step 0: backbone and base head under the FIS loss (c = 0.5 by default).
inline ClassifierResult train_step0(const Dataset& train, const Dataset& val,
                                    const StageConfig& cfg = default_step0_config(),
                                    const Architecture& arch = {}) {
  return train_classifier(train, val, cfg, arch, Weighting::fis, "step0");
}

/// ERM baseline: the Step 0 pipeline with plain mean cross-entropy.
inline ClassifierResult train_erm_baseline(const Dataset& train, const Dataset& val,
                                           const StageConfig& cfg = default_step0_config(),
                                           const Architecture& arch = {}) {
  return train_classifier(train, val, cfg, arch, Weighting::mean, "erm");
}

// ---------------------------------------------------------------------------
// Step 1: cohort heads on the frozen backbone

/// Backbone features of every sample.
inline std::vector<std::vector<double>> extract_features(const nn::NetParams& backbone, const Dataset& d) {
  std::vector<std::vector<double>> out;
  out.reserve(d.size());
  for (const Sample& s : d.samples()) out.push_back(nn::predict(backbone, s.features));
  return out;
}

struct HeadGradient {
  double loss = 0.0;
  nn::GradientSet head;
};

/// Masked FIS objective for head j: only cohort-j members of the batch enter
/// the loss (and the s^I normalisation); the total is still divided by |B|.
inline HeadGradient head_batch_gradient(const nn::NetParams& head, const std::vector<std::vector<double>>& features,
                                        const Dataset& data, std::span<const std::size_t> batch, std::size_t cohort,
                                        const FisOptions& fis) {
  HeadGradient g{0.0, nn::GradientSet::zeros(head)};
  std::vector<std::size_t> members;
  for (std::size_t i : batch) if (data[i].attribute == cohort) members.push_back(i);
  if (members.empty()) return g;
  std::vector<nn::ForwardResult> fh(members.size());
  std::vector<double> losses(members.size());
  std::vector<std::size_t> cohorts(members.size(), cohort);
  for (std::size_t m = 0; m < members.size(); ++m) {
    fh[m] = nn::forward(head, features[members[m]]);
    losses[m] = bce(fh[m].output, data[members[m]].label);
  }
  const BatchLoss bl = weighted_batch_loss(losses, cohorts, data.shape().cohorts, Weighting::fis, fis,
                                           static_cast<double>(batch.size()));
  g.loss = bl.loss;
  for (std::size_t m = 0; m < members.size(); ++m) {
    auto up = bce_grad(fh[m].output, data[members[m]].label);
    for (double& v : up) v *= bl.grad_loss[m];
    nn::backward_into(head, fh[m].cache, up, g.head);
  }
  return g;
}

inline double head_batch_loss(const nn::NetParams& head, const std::vector<std::vector<double>>& features,
                              const Dataset& data, std::span<const std::size_t> batch, std::size_t cohort,
                              const FisOptions& fis) {
  std::vector<double> losses;
  std::vector<std::size_t> cohorts;
  for (std::size_t i : batch) {
    if (data[i].attribute != cohort) continue;
    losses.push_back(bce(nn::predict(head, features[i]), data[i].label));
    cohorts.push_back(cohort);
  }
  if (losses.empty()) return 0.0;
  return weighted_batch_loss(losses, cohorts, data.shape().cohorts, Weighting::fis, fis,
                             static_cast<double>(batch.size()))
      .loss;
}

struct HeadResult {
  nn::NetParams head;
  TrainReport report;
};

/// Step 1 for cohort j. The backbone is read-only; the head starts from a
/// fresh initialisation and the epoch with the best validation AUC on
/// cohort j is returned.
inline HeadResult train_step1(const Dataset& train, const Dataset& val, const nn::NetParams& backbone,
                              std::size_t cohort, const StageConfig& cfg = default_step1_config(),
                              const Architecture& arch = {}) {
  cfg.validate("step1");
  detail::check_binary(train, "step1");
  if (cohort >= train.shape().cohorts) {
    throw ValidationError("step1: cohort " + std::to_string(cohort) + " absent from the training split");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_feats = extract_features(backbone, train);
  const auto val_feats = extract_features(backbone, val);
  ScoredSet vs;
  std::vector<std::size_t> val_members;
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (val[i].attribute == cohort) {
      val_members.push_back(i);
      vs.labels.push_back(val[i].label);
      vs.attributes.push_back(cohort);
    }
  }
  Architecture a = arch;
  a.feature_dim = backbone.output_dim();
  HeadResult res{make_head(a, train.shape().classes, cfg.seed + 101 + cohort), {}};
  nn::NetParams head = res.head;
  nn::OptimizerState opt(cfg.optimizer, head);
  const FisOptions fis{cfg.c, cfg.detach_weights};
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    const auto plan = batches(train, cfg.batch_size, cfg.seed + 7 * (cohort + 1), epoch);
    for (const auto& batch : plan) {
      const HeadGradient g = head_batch_gradient(head, train_feats, train, batch, cohort, fis);
      detail::check_finite(g.loss, "step1", epoch);
      sum += g.loss;
      opt.apply(head, g.head, epoch);
    }
    vs.scores.clear();
    for (std::size_t i : val_members) vs.scores.push_back(nn::predict(head, val_feats[i])[1]);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(plan.size());
    try {
      rec.val_auc = auc(vs);
      rec.val_esauc = es_auc(vs);
    } catch (const ValidationError&) {
      rec.val_auc = rec.val_esauc = std::numeric_limits<double>::quiet_NaN();
    }
    res.report.epochs.push_back(rec);
    if (epoch == 0 || rec.val_auc > best) {
      best = rec.val_auc;
      res.head = head;
      res.report.selected_epoch = epoch;
    }
  }
  res.report.wall_clock_seconds = detail::seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Step 2: gating and consolidator

/// Frozen per-case quantities for Step 2: raw input, backbone features, and
/// every head's prediction.
struct FrozenCases {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<std::vector<double>>> head_probs;
};

inline FrozenCases freeze_cases(const nn::NetParams& backbone, const std::vector<nn::NetParams>& heads,
                                const Dataset& d) {
  FrozenCases fc;
  fc.features = extract_features(backbone, d);
  fc.head_probs.reserve(d.size());
  for (const auto& f : fc.features) {
    std::vector<std::vector<double>> hp;
    for (const auto& h : heads) hp.push_back(nn::predict(h, f));
    fc.head_probs.push_back(std::move(hp));
  }
  return fc;
}

struct Step2Gradient {
  double loss = 0.0;  // FIS + penalty
  double fis = 0.0;
  double penalty = 0.0;
  double ai_mass = 0.0;
  double clinician_mass = 0.0;
  nn::GradientSet gating;
  nn::GradientSet consolidator;
};

/// Step 2 batch objective: FIS of the soft-gated consolidator output plus
/// the budget penalty, with gradients for gating and consolidator.
inline Step2Gradient step2_batch_gradient(const nn::NetParams& gating, const nn::NetParams& consolidator,
                                          GatingInput gating_input, const Dataset& data, const FrozenCases& frozen,
                                          std::span<const std::size_t> user_labels,
                                          std::span<const std::size_t> batch, const FisOptions& fis,
                                          const BudgetConfig& budget) {
  const std::size_t n = batch.size();
  const std::size_t k = data.shape().classes;
  const std::size_t a = data.shape().cohorts;
  std::vector<nn::ForwardResult> fg(n), fc(n);
  std::vector<std::vector<double>> gates(n), users(n);
  std::vector<double> losses(n);
  std::vector<std::size_t> cohorts(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = batch[b];
    fg[b] = nn::forward(gating, gating_input == GatingInput::raw ? std::span<const double>(data[i].features)
                                                                : std::span<const double>(frozen.features[i]));
    gates[b] = fg[b].output;
    users[b] = one_hot(user_labels[i], k);
    fc[b] = nn::forward(consolidator, consolidator_input(frozen.head_probs[i], gates[b], users[b]));
    losses[b] = bce(fc[b].output, data[i].label);
    cohorts[b] = data[i].attribute;
  }
  const FisResult fr = fis_from_losses(losses, cohorts, a, fis, static_cast<double>(n));
  const BudgetPenalty bp = budget_penalty(gates, budget);
  Step2Gradient g;
  g.fis = fr.total;
  g.penalty = bp.value;
  g.loss = fr.total + bp.value;
  g.ai_mass = bp.ai_mass;
  g.clinician_mass = bp.clinician_mass;
  g.gating = nn::GradientSet::zeros(gating);
  g.consolidator = nn::GradientSet::zeros(consolidator);
  std::vector<double> dgate(a + 1);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = batch[b];
    auto up = bce_grad(fc[b].output, data[i].label);
    for (double& v : up) v *= fr.grad_loss[b];
    const auto dz = nn::backward_into(consolidator, fc[b].cache, up, g.consolidator);
    for (std::size_t j = 0; j <= a; ++j) {
      const std::span<const double> src = j < a ? std::span<const double>(frozen.head_probs[i][j])
                                                : std::span<const double>(users[b]);
      double d = bp.grad[b][j];
      for (std::size_t c = 0; c < k; ++c) d += dz[j * k + c] * src[c];
      dgate[j] = d;
    }
    nn::backward_into(gating, fg[b].cache, dgate, g.gating);
  }
  return g;
}

inline double step2_batch_loss(const nn::NetParams& gating, const nn::NetParams& consolidator,
                               GatingInput gating_input, const Dataset& data, const FrozenCases& frozen,
                               std::span<const std::size_t> user_labels, std::span<const std::size_t> batch,
                               const FisOptions& fis, const BudgetConfig& budget) {
  std::vector<std::vector<double>> gates;
  std::vector<double> losses;
  std::vector<std::size_t> cohorts;
  for (std::size_t i : batch) {
    auto g = nn::predict(gating, gating_input == GatingInput::raw ? std::span<const double>(data[i].features)
                                                                 : std::span<const double>(frozen.features[i]));
    const auto user = one_hot(user_labels[i], data.shape().classes);
    losses.push_back(bce(nn::predict(consolidator, consolidator_input(frozen.head_probs[i], g, user)), data[i].label));
    cohorts.push_back(data[i].attribute);
    gates.push_back(std::move(g));
  }
  return fis_from_losses(losses, cohorts, data.shape().cohorts, fis, static_cast<double>(batch.size())).total +
         budget_penalty(gates, budget).value;
}

struct CasePrediction {
  std::vector<double> probs;
  GateDecision gates;
};

/// Hard-gated predictions of a trained model over a dataset.
inline std::vector<CasePrediction> predict_cases(const PecmanModel& model, const Dataset& d, const FrozenCases& frozen,
                                                 std::span<const std::size_t> user_labels) {
  std::vector<CasePrediction> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto user = one_hot(user_labels[i], d.shape().classes);
    auto hp = consolidate_hard_cached(model, d[i].features, frozen.features[i], frozen.head_probs[i], user);
    out.push_back(CasePrediction{std::move(hp.probs), std::move(hp.gates)});
  }
  return out;
}

struct Step2Result {
  nn::NetParams gating;
  nn::NetParams consolidator;
  TrainReport report;
};

/// Step 2 for one budget epsilon: gating and consolidator on top of the
/// frozen backbone and heads. Each epoch draws one annotator label per case;
/// the returned checkpoint is the epoch with the best validation ES-AUC among
/// those whose validation soft-gate budget holds within the tolerance (or the
/// least-violating epoch, flagged, when none does).
inline Step2Result train_step2(const Dataset& train, const Dataset& val, const nn::NetParams& backbone,
                               const std::vector<nn::NetParams>& heads, double epsilon,
                               const Step2Config& cfg = default_step2_config(), const Architecture& arch = {}) {
  cfg.stage.validate("step2");
  detail::check_binary(train, "step2");
  if (epsilon < 0.0 || epsilon > 1.0) throw ValidationError("step2: epsilon must lie in [0, 1]");
  if (train.shape().annotators == 0 || val.shape().annotators == 0) {
    throw ValidationError("step2: expert annotations are required");
  }
  if (heads.size() != train.shape().cohorts) throw ValidationError("step2: need one head per cohort");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t a = train.shape().cohorts;
  const std::size_t k = train.shape().classes;
  const FrozenCases tf = freeze_cases(backbone, heads, train);
  const FrozenCases vf = freeze_cases(backbone, heads, val);
  const std::vector<std::size_t> val_users = clinician_labels(val, cfg.stage.seed);

  PecmanModel model;
  model.backbone = backbone;
  model.heads = heads;
  model.trained_epsilon = epsilon;
  model.gating_input = cfg.gating_input;
  model.include_on_tie = cfg.include_on_tie;
  const std::size_t gate_in = cfg.gating_input == GatingInput::raw ? train.shape().features : backbone.output_dim();
  model.gating = make_gating(gate_in, a, arch, cfg.stage.seed + 201);
  model.consolidator = make_consolidator(a, k, arch, cfg.stage.seed + 202);
  nn::OptimizerState opt_g(cfg.stage.optimizer, model.gating);
  nn::OptimizerState opt_c(cfg.stage.optimizer, model.consolidator);
  const FisOptions fis{cfg.stage.c, cfg.stage.detach_weights};

  Step2Result res{model.gating, model.consolidator, {}};
  double best_score = -std::numeric_limits<double>::infinity();
  double best_violation = std::numeric_limits<double>::infinity();
  bool have_feasible = false;
  std::vector<std::size_t> users(train.size());
  for (std::size_t epoch = 0; epoch < cfg.stage.epochs; ++epoch) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      users[i] = train[i].annotations[clinician_draw(train[i], train.shape().annotators, cfg.stage.seed, epoch + 1)];
    }
    const BudgetConfig budget{epsilon, cfg.penalty.at(epoch), cfg.ai_term, cfg.clinician_term};
    double sum = 0.0;
    const auto plan = batches(train, cfg.stage.batch_size, cfg.stage.seed, epoch);
    for (const auto& batch : plan) {
      const Step2Gradient g = step2_batch_gradient(model.gating, model.consolidator, cfg.gating_input, train, tf,
                                                   users, batch, fis, budget);
      detail::check_finite(g.loss, "step2", epoch);
      sum += g.loss;
      opt_g.apply(model.gating, g.gating, epoch);
      opt_c.apply(model.consolidator, g.consolidator, epoch);
    }

    const auto preds = predict_cases(model, val, vf, val_users);
    ScoredSet vs;
    double ai_mass = 0.0, cl_mass = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      vs.scores.push_back(preds[i].probs[1]);
      vs.labels.push_back(val[i].label);
      vs.attributes.push_back(val[i].attribute);
      for (std::size_t j = 0; j < a; ++j) ai_mass += preds[i].gates.soft[j];
      cl_mass += preds[i].gates.soft[a];
    }
    ai_mass /= static_cast<double>(val.size());
    cl_mass /= static_cast<double>(val.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(plan.size());
    const CohortAuc ca = cohort_aucs(vs);
    rec.val_auc = ca.overall;
    rec.val_esauc = es_auc_from(ca);
    rec.ai_gate_mass = ai_mass;
    rec.clinician_gate_mass = cl_mass;
    res.report.epochs.push_back(rec);

    double violation = 0.0;
    if (cfg.ai_term) violation = std::max(violation, epsilon - ai_mass);
    if (cfg.clinician_term) violation = std::max(violation, cl_mass - (1.0 - epsilon));
    const bool feasible = violation <= cfg.budget_tolerance;
    bool take = false;
    if (feasible) {
      take = !have_feasible || rec.val_esauc > best_score;
      if (take) have_feasible = true;
    } else if (!have_feasible) {
      take = violation <= best_violation;
    }
    if (take) {
      best_score = rec.val_esauc;
      best_violation = std::min(best_violation, violation);
      res.gating = model.gating;
      res.consolidator = model.consolidator;
      res.report.selected_epoch = epoch;
    }
  }
  res.report.budget_satisfied = have_feasible || cfg.stage.epochs == 0;
  res.report.wall_clock_seconds = detail::seconds_since(t0);
  return res;
}

inline PecmanModel assemble_model(const nn::NetParams& backbone, const std::vector<nn::NetParams>& heads,
                                  const Step2Result& step2, double epsilon, const Step2Config& cfg) {
  PecmanModel m;
  m.backbone = backbone;
  m.heads = heads;
  m.gating = step2.gating;
  m.consolidator = step2.consolidator;
  m.trained_epsilon = epsilon;
  m.gating_input = cfg.gating_input;
  m.include_on_tie = cfg.include_on_tie;
  m.validate();
  return m;
}

/// Worker count from FAIRHAI_THREADS (0 = run inline); unset means one per core.
inline std::size_t thread_budget() {
  if (const char* env = std::getenv("FAIRHAI_THREADS")) {
    std::size_t n = 0;
    if (detail::parse_index(env, n)) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `job(i)` for i in [0, count) on up to `threads` workers. Results are
/// written by index, so the outcome does not depend on scheduling.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Step 2 over a budget grid; the instances share the frozen inputs.
inline std::vector<Step2Result> sweep_step2(const Dataset& train, const Dataset& val, const nn::NetParams& backbone,
                                            const std::vector<nn::NetParams>& heads,
                                            const std::vector<double>& epsilons, const Step2Config& cfg,
                                            const Architecture& arch = {}, std::size_t threads = 0) {
  std::vector<std::optional<Step2Result>> slots(epsilons.size());
  parallel_for(epsilons.size(), threads, [&](std::size_t i) {
    slots[i] = train_step2(train, val, backbone, heads, epsilons[i], cfg, arch);
  });
  std::vector<Step2Result> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Fair L2D baseline: one fair classifier plus a confidence-threshold defer rule

/// Gap between the two largest head logits. Orders cases like the max-class
/// probability for K = 2 but does not saturate once the softmax rounds to 1.
inline double confidence_margin(const Classifier& clf, std::span<const double> x) {
  const auto fh = nn::forward(clf.head, nn::predict(clf.backbone, x));
  std::vector<double> z = fh.cache.back().pre;
  std::partial_sort(z.begin(), z.begin() + 2, z.end(), std::greater<>());
  return z[0] - z[1];
}

struct FairL2D {
  Classifier classifier;
  double epsilon = 1.0;
  /// Cases whose confidence margin is strictly below this go to the clinician.
  double threshold = -std::numeric_limits<double>::infinity();

  bool defers(std::span<const double> x) const { return confidence_margin(classifier, x) < threshold; }
};

/// Picks the threshold that defers a (1 - epsilon) share of the validation cases.
inline FairL2D calibrate_fair_l2d(const Classifier& clf, const Dataset& val, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ValidationError("fair_l2d: epsilon must lie in [0, 1]");
  FairL2D out{clf, epsilon, -std::numeric_limits<double>::infinity()};
  std::vector<double> conf;
  for (const Sample& s : val.samples()) conf.push_back(confidence_margin(clf, s.features));
  std::sort(conf.begin(), conf.end());
  const auto defer = static_cast<std::size_t>(std::llround((1.0 - epsilon) * static_cast<double>(conf.size())));
  if (defer >= conf.size()) {
    out.threshold = std::numeric_limits<double>::infinity();
  } else if (defer > 0) {
    out.threshold = conf[defer];
  }
  return out;
}

struct FairL2DResult {
  FairL2D model;
  TrainReport report;
};

/// Trains the Step 0 fair classifier and calibrates its defer rule.
inline FairL2DResult train_fair_l2d_baseline(const Dataset& train, const Dataset& val, double epsilon,
                                             const StageConfig& cfg = default_step0_config(),
                                             const Architecture& arch = {}) {
  ClassifierResult base = train_step0(train, val, cfg, arch);
  return FairL2DResult{calibrate_fair_l2d(base.classifier, val, epsilon), std::move(base.report)};
}

struct L2DPrediction {
  double score = 0.0;  // positive-class score
  bool deferred = false;
};

inline std::vector<L2DPrediction> predict_fair_l2d(const FairL2D& m, const Dataset& d,
                                                   std::span<const std::size_t> user_labels) {
  std::vector<L2DPrediction> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto p = m.classifier.predict(d[i].features);
    if (m.defers(d[i].features)) {
      out.push_back(L2DPrediction{user_labels[i] == 1 ? 1.0 : 0.0, true});
    } else {
      out.push_back(L2DPrediction{p[1], false});
    }
  }
  return out;
}

}  // namespace fairhai

#endif  // FAIRHAI_TRAINING_HPP_
