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

#ifndef FAIRHAI_LOSSES_HPP_
#define FAIRHAI_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fairhai/detail/common.hpp"
#include "fairhai/error.hpp"

namespace fairhai {

// ---------------------------------------------------------------------------
// Cross-entropy

/// -sum_k y_k log(clip(p_k)). For K = 2 this is the usual binary cross-entropy.
inline double bce(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw ShapeError("bce: prediction and target sizes differ");
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (y[k] != 0.0) loss -= y[k] * std::log(detail::clip_prob(p[k]));
  }
  return loss;
}

inline double bce(std::span<const double> p, std::size_t label) {
  if (label >= p.size()) throw ShapeError("bce: label out of range");
  return -std::log(detail::clip_prob(p[label]));
}

/// d bce / d p for a one-hot target; zero where the clip is active.
inline std::vector<double> bce_grad(std::span<const double> p, std::size_t label) {
  if (label >= p.size()) throw ShapeError("bce_grad: label out of range");
  std::vector<double> g(p.size(), 0.0);
  const double q = p[label];
  if (q > kProbClip && q < 1.0 - kProbClip) g[label] = -1.0 / q;
  return g;
}

inline std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) throw ShapeError("one_hot: label out of range");
  std::vector<double> y(classes, 0.0);
  y[label] = 1.0;
  return y;
}

// ---------------------------------------------------------------------------
// Scaling weights

/// Softmax of the per-sample losses over the batch.
inline std::vector<double> individual_scale(std::span<const double> losses) {
  if (losses.empty()) throw ValidationError("individual_scale: empty batch");
  return detail::softmax(losses);
}

struct Wasserstein1 {
  double value = 0.0;
  std::vector<double> grad_u;  // d value / d u_i, in the caller's order
  std::vector<double> grad_v;
};

/// Exact W1 between the empirical distributions of `u` and `v` as the
/// integral of |F_u^-1 - F_v^-1|. Quantile breakpoints live on the common
/// grid 1/(|u| |v|), so unequal sizes are handled without rounding. The
/// gradient holds the sorted matching fixed; tied differences contribute 0.
inline Wasserstein1 wasserstein1_1d_with_grad(std::span<const double> u, std::span<const double> v) {
  if (u.empty() || v.empty()) throw ValidationError("wasserstein1_1d: empty input");
  const std::uint64_t n = u.size();
  const std::uint64_t m = v.size();
  auto argsort = [](std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    return idx;
  };
  const auto ou = argsort(u);
  const auto ov = argsort(v);
  Wasserstein1 res;
  res.grad_u.assign(n, 0.0);
  res.grad_v.assign(m, 0.0);
  const double total = static_cast<double>(n * m);
  std::uint64_t i = 0, j = 0, t = 0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::uint64_t end_u = (i + 1) * m;
    const std::uint64_t end_v = (j + 1) * n;
    const std::uint64_t end = std::min(end_u, end_v);
    const double width = static_cast<double>(end - t) / total;
    const double diff = u[ou[i]] - v[ov[j]];
    acc += width * std::abs(diff);
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    res.grad_u[ou[i]] += width * sign;
    res.grad_v[ov[j]] -= width * sign;
    t = end;
    if (end_u == end) ++i;
    if (end_v == end) ++j;
  }
  res.value = acc;
  return res;
}

inline double wasserstein1_1d(std::span<const double> u, std::span<const double> v) {
  return wasserstein1_1d_with_grad(u, v).value;
}

/// Softmax over the entries flagged present; absent entries get weight 0.
inline std::vector<double> softmax_over_present(std::span<const double> d, const std::vector<bool>& present) {
  std::vector<double> w(d.size(), 0.0);
  double m = -INFINITY;
  for (std::size_t j = 0; j < d.size(); ++j) if (present[j]) m = std::max(m, d[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (!present[j]) continue;
    w[j] = std::exp(d[j] - m);
    sum += w[j];
  }
  for (double& x : w) x /= sum;
  return w;
}

struct GroupScale {
  std::vector<double> weights;                  // per cohort; 0 for cohorts absent from the batch
  std::vector<double> distances;                // W1(L(B), L_j(B)); 0 when absent
  std::vector<bool> present;
  std::vector<std::vector<double>> distance_grad;  // [cohort][sample] d distance / d loss
};

inline GroupScale group_scale(std::span<const double> losses, std::span<const std::size_t> cohorts,
                              std::size_t num_cohorts) {
  if (losses.size() != cohorts.size()) throw ShapeError("group_scale: losses and cohorts differ in length");
  if (losses.empty()) throw ValidationError("group_scale: empty batch");
  GroupScale gs;
  gs.distances.assign(num_cohorts, 0.0);
  gs.present.assign(num_cohorts, false);
  gs.distance_grad.assign(num_cohorts, std::vector<double>(losses.size(), 0.0));
  std::vector<std::vector<std::size_t>> members(num_cohorts);
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    if (cohorts[i] >= num_cohorts) throw ShapeError("group_scale: cohort id out of range");
    members[cohorts[i]].push_back(i);
  }
  for (std::size_t j = 0; j < num_cohorts; ++j) {
    if (members[j].empty()) continue;
    gs.present[j] = true;
    std::vector<double> sub;
    sub.reserve(members[j].size());
    for (std::size_t i : members[j]) sub.push_back(losses[i]);
    const Wasserstein1 w = wasserstein1_1d_with_grad(losses, sub);
    gs.distances[j] = w.value;
    auto& g = gs.distance_grad[j];
    for (std::size_t i = 0; i < losses.size(); ++i) g[i] = w.grad_u[i];
    for (std::size_t s = 0; s < members[j].size(); ++s) g[members[j][s]] += w.grad_v[s];
  }
  gs.weights = softmax_over_present(gs.distances, gs.present);
  return gs;
}

// ---------------------------------------------------------------------------
// FIS loss

struct FisOptions {
  double c = 0.5;
  /// Treat s^I and s^G as constants when differentiating.
  bool detach_weights = false;
};

struct FisResult {
  double total = 0.0;
  std::vector<double> weights;        // (1-c) s^I_i + c s^G_{a_i}
  std::vector<double> weighted;       // weights[i] * loss[i]
  std::vector<double> individual;     // s^I
  GroupScale group;
  std::vector<double> grad_loss;      // d total / d loss_i
};

/// FIS total from precomputed per-sample losses:
///   total = (1/normalizer) * sum_i [(1-c) s^I_i + c s^G_{a_i}] * loss_i.
/// `normalizer` is the batch size |B|; it exceeds losses.size() when the
/// caller has already masked out part of the batch.
inline FisResult fis_from_losses(std::span<const double> losses, std::span<const std::size_t> cohorts,
                                 std::size_t num_cohorts, const FisOptions& opt, double normalizer) {
  if (opt.c < 0.0 || opt.c > 1.0) throw ValidationError("fis: c must lie in [0, 1]");
  if (!(normalizer > 0.0)) throw ValidationError("fis: normalizer must be positive");
  const std::size_t n = losses.size();
  FisResult r;
  r.individual = individual_scale(losses);
  r.group = group_scale(losses, cohorts, num_cohorts);
  r.weights.resize(n);
  r.weighted.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.weights[i] = (1.0 - opt.c) * r.individual[i] + opt.c * r.group.weights[cohorts[i]];
    r.weighted[i] = r.weights[i] * losses[i];
    sum += r.weighted[i];
  }
  r.total = sum / normalizer;

  r.grad_loss.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) r.grad_loss[k] = r.weights[k];
  if (!opt.detach_weights) {
    // Through s^I: sum_i l_i ds^I_i/dl_k = s^I_k (l_k - <s^I, l>).
    double mean_i = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_i += r.individual[i] * losses[i];
    for (std::size_t k = 0; k < n; ++k) {
      r.grad_loss[k] += (1.0 - opt.c) * r.individual[k] * (losses[k] - mean_i);
    }
    // Through s^G: with S_m the summed loss of cohort m,
    // sum_m S_m ds^G_m/dl_k = sum_m s^G_m (S_m - <s^G, S>) dd_m/dl_k.
    if (opt.c != 0.0) {
      std::vector<double> cohort_sum(num_cohorts, 0.0);
      for (std::size_t i = 0; i < n; ++i) cohort_sum[cohorts[i]] += losses[i];
      double mean_g = 0.0;
      for (std::size_t j = 0; j < num_cohorts; ++j) {
        if (r.group.present[j]) mean_g += r.group.weights[j] * cohort_sum[j];
      }
      for (std::size_t j = 0; j < num_cohorts; ++j) {
        if (!r.group.present[j]) continue;
        const double coef = opt.c * r.group.weights[j] * (cohort_sum[j] - mean_g);
        if (coef == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k) r.grad_loss[k] += coef * r.group.distance_grad[j][k];
      }
    }
  }
  for (double& g : r.grad_loss) g /= normalizer;
  return r;
}

/// Predicted distributions, targets, and cohorts of one batch.
struct FisBatch {
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> cohorts;
  std::size_t num_cohorts = 2;
  double c = 0.5;

  void validate() const {
    if (probs.size() < 2) throw ValidationError("fis batch needs at least 2 samples");
    if (labels.size() != probs.size() || cohorts.size() != probs.size()) {
      throw ShapeError("fis batch: lists differ in length");
    }
    if (c < 0.0 || c > 1.0) throw ValidationError("fis batch: c must lie in [0, 1]");
    for (const auto& p : probs) {
      double s = 0.0;
      for (double v : p) s += v;
      if (std::abs(s - 1.0) > 1e-9) throw ValidationError("fis batch: prediction does not sum to 1");
    }
  }
};

struct FisLoss {
  FisResult fis;
  std::vector<double> losses;                   // per-sample BCE
  std::vector<std::vector<double>> grad_probs;  // d total / d p_i
};

inline FisLoss fis_loss(const FisBatch& batch, bool detach_weights = false) {
  batch.validate();
  FisLoss out;
  const std::size_t n = batch.probs.size();
  out.losses.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.losses[i] = bce(batch.probs[i], batch.labels[i]);
  out.fis = fis_from_losses(out.losses, batch.cohorts, batch.num_cohorts,
                            FisOptions{batch.c, detach_weights}, static_cast<double>(n));
  out.grad_probs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad_probs[i] = bce_grad(batch.probs[i], batch.labels[i]);
    for (double& g : out.grad_probs[i]) g *= out.fis.grad_loss[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collaboration budget

struct BudgetConfig {
  double epsilon = 0.5;
  double lambda = 1.0;
  bool ai_term = true;         // mean AI gate mass >= epsilon
  bool clinician_term = true;  // mean clinician gate <= 1 - epsilon

  void validate() const {
    if (epsilon < 0.0 || epsilon > 1.0) throw ValidationError("budget: epsilon must lie in [0, 1]");
    if (lambda < 0.0) throw ValidationError("budget: lambda must be non-negative");
  }
};

struct BudgetPenalty {
  double value = 0.0;
  double ai_mass = 0.0;         // mean over the batch of sum_{j<A} g_j
  double clinician_mass = 0.0;  // mean over the batch of g_A
  std::vector<std::vector<double>> grad;  // d value / d g_i
};

/// lambda * [max(0, eps - mean AI mass)^2 + max(0, mean clinician gate - (1 - eps))^2].
/// Gate vectors have A + 1 entries; the last one is the clinician.
inline BudgetPenalty budget_penalty(std::span<const std::vector<double>> gates, const BudgetConfig& cfg) {
  cfg.validate();
  if (gates.empty()) throw ValidationError("budget_penalty: empty batch");
  const std::size_t width = gates.front().size();
  if (width < 2) throw ShapeError("budget_penalty: gate vectors need A + 1 >= 2 entries");
  BudgetPenalty p;
  const double n = static_cast<double>(gates.size());
  for (const auto& g : gates) {
    if (g.size() != width) throw ShapeError("budget_penalty: ragged gate vectors");
    for (std::size_t j = 0; j + 1 < width; ++j) p.ai_mass += g[j];
    p.clinician_mass += g[width - 1];
  }
  p.ai_mass /= n;
  p.clinician_mass /= n;
  const double ai_gap = cfg.ai_term ? std::max(0.0, cfg.epsilon - p.ai_mass) : 0.0;
  const double cl_gap = cfg.clinician_term ? std::max(0.0, p.clinician_mass - (1.0 - cfg.epsilon)) : 0.0;
  p.value = cfg.lambda * (ai_gap * ai_gap + cl_gap * cl_gap);
  const double d_ai = -2.0 * cfg.lambda * ai_gap / n;
  const double d_cl = 2.0 * cfg.lambda * cl_gap / n;
  p.grad.assign(gates.size(), std::vector<double>(width, 0.0));
  for (auto& g : p.grad) {
    for (std::size_t j = 0; j + 1 < width; ++j) g[j] = d_ai;
    g[width - 1] = d_cl;
  }
  return p;
}

/// lambda_0 doubled every `period` epochs, capped at lambda_max.
struct PenaltySchedule {
  double initial = 1.0;
  std::size_t period = 10;
  double max = 64.0;

  double at(std::size_t epoch) const {
    if (period == 0) return std::min(initial, max);
    return std::min(max, initial * std::pow(2.0, static_cast<double>(epoch / period)));
  }
};

}  // namespace fairhai

#endif  // FAIRHAI_LOSSES_HPP_
