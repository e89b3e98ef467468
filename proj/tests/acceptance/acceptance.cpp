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

// Release checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "commands.hpp"
#include "fairhai/config.hpp"
#include "fairhai/evaluation.hpp"
#include "fairhai/experts.hpp"
#include "fairhai/losses.hpp"
#include "fairhai/pipeline.hpp"
#include "fairhai/training.hpp"
#include "test_util.hpp"

namespace fairhai {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects failure messages for one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      std::ostringstream m;
      m.precision(17);
      m << what << ": got " << got << ", want " << want << " +/- " << tol;
      failures.push_back(m.str());
    }
  }
};

int g_failed = 0;

void report(int id, const std::string& name, const Check& c, const std::string& detail) {
  const bool ok = c.failures.empty();
  if (!ok) ++g_failed;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  const std::size_t shown = std::min<std::size_t>(c.failures.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) std::cout << "    " << c.failures[i] << "\n";
  if (c.failures.size() > shown) std::cout << "    ... " << c.failures.size() - shown << " more\n";
  std::cout.flush();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------
// 1. Formula oracles

double pair_count_auc(const std::vector<double>& s, const std::vector<std::size_t>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

double transport_oracle(const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t L = std::lcm(u.size(), v.size());
  std::vector<std::vector<double>> cost(L, std::vector<double>(L));
  for (std::size_t r = 0; r < L; ++r) {
    for (std::size_t s = 0; s < L; ++s) cost[r][s] = std::abs(u[r / (L / u.size())] - v[s / (L / v.size())]);
  }
  return test::assignment_cost(cost) / static_cast<double>(L);
}

/// Probabilities whose label-1 cross-entropy equals each requested loss.
FisBatch batch_with_losses(const std::vector<double>& l, const std::vector<std::size_t>& a, std::size_t cohorts,
                           double c) {
  FisBatch b;
  b.num_cohorts = cohorts;
  b.c = c;
  for (double li : l) {
    const double p = std::exp(-li);
    b.probs.push_back({1.0 - p, p});
    b.labels.push_back(1);
  }
  b.cohorts = a;
  return b;
}

CoverageCurve curve_of(const std::vector<double>& xs, const std::vector<double>& ys) {
  CoverageCurve c;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CurvePoint p;
    p.coverage = xs[i];
    p.auc = ys[i];
    p.es_auc = ys[i];
    c.points.push_back(p);
  }
  return c;
}

void criterion_formulas() {
  const auto t0 = Clock::now();
  Check c;
  const double tol = 1e-9;

  // bce
  c.near(bce(std::vector<double>{0.5, 0.5}, 0), std::log(2.0), tol, "bce uniform");
  c.near(bce(std::vector<double>{0.9, 0.1}, 1), -std::log(0.1), tol, "bce (0.9, 0.1)");
  c.near(bce(std::vector<double>{1.0 - 1e-7, 1e-7}, 0), 1e-7, 1e-12, "bce near-perfect");

  // individual scale
  {
    const auto w = individual_scale(std::vector<double>{0.0, std::log(2.0)});
    c.near(w[0], 1.0 / 3.0, tol, "individual_scale w0");
    c.near(w[1], 2.0 / 3.0, tol, "individual_scale w1");
    for (double x : individual_scale(std::vector<double>(5, 0.37))) c.near(x, 0.2, tol, "individual_scale equal");
    const auto big = individual_scale(std::vector<double>{0.0, 50.0});
    c.near(big[0], static_cast<double>(1.0L / (1.0L + std::exp(50.0L))), 1e-12, "individual_scale (0, 50) w0");
    c.near(big[1], 1.0, 1e-12, "individual_scale (0, 50) w1");
  }

  // W1 against an assignment-problem oracle
  c.near(wasserstein1_1d(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 0.5}), 0.5, tol, "w1 midpoint");
  c.near(wasserstein1_1d(std::vector<double>{0.0}, std::vector<double>{1.0}), 1.0, tol, "w1 point masses");
  c.near(wasserstein1_1d(std::vector<double>{0.3, -1.0, 2.5}, std::vector<double>{2.5, 0.3, -1.0}), 0.0, tol,
         "w1 identical");
  {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 40; ++t) {
      const auto u = test::uniform_vec(rng, 1 + rng() % 6, -2.0, 3.0);
      const auto v = test::uniform_vec(rng, 1 + rng() % 6, -2.0, 3.0);
      c.near(wasserstein1_1d(u, v), transport_oracle(u, v), tol, "w1 random instance " + std::to_string(t));
    }
  }

  // group scale
  {
    const auto w = softmax_over_present(std::vector<double>{0.0, std::log(3.0)}, {true, true});
    c.near(w[0], 0.25, tol, "group softmax w0");
    c.near(w[1], 0.75, tol, "group softmax w1");
    const auto sym = group_scale(std::vector<double>{0.1, 0.5, 0.1, 0.5}, std::vector<std::size_t>{0, 0, 1, 1}, 2);
    c.near(sym.weights[0], 0.5, tol, "group_scale symmetric w0");
    c.near(sym.weights[1], 0.5, tol, "group_scale symmetric w1");
    const auto one = group_scale(std::vector<double>{0.1, 0.7, 0.2}, std::vector<std::size_t>{0, 0, 0}, 2);
    c.near(one.weights[0], 1.0, tol, "group_scale single cohort");
  }

  // FIS total
  {
    const long double e = std::exp(0.4L);
    const long double s0 = 1 / (1 + e), s1 = e / (1 + e);
    const long double want = ((0.5L * s0 + 0.5L) * 0.2L + (0.5L * s1 + 0.5L) * 0.6L) / 2;
    const double got = fis_loss(batch_with_losses({0.2, 0.6}, {0, 0}, 1, 0.5)).fis.total;
    c.near(got, static_cast<double>(want), tol, "fis two-sample");
    c.near(got, 0.30986876601124, tol, "fis two-sample constant");

    const std::vector<double> l{0.3, 1.1, 0.05, 0.7};
    const std::vector<std::size_t> a{0, 1, 1, 0};
    const auto sI = individual_scale(l);
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      c0 += sI[i] * l[i];
      c1 += l[i];
    }
    c.near(fis_loss(batch_with_losses(l, a, 2, 0.0)).fis.total, c0 / 4.0, tol, "fis c = 0");
    c.near(fis_loss(batch_with_losses(l, {0, 0, 0, 0}, 2, 1.0)).fis.total, c1 / 4.0, tol, "fis c = 1 single cohort");
  }

  // ES-AUC and AUC
  {
    CohortAuc ca;
    ca.overall = 0.85;
    ca.cohorts = {0, 1};
    ca.per_cohort = {0.9, 0.8};
    c.near(es_auc_from(ca), 0.85 / 1.1, tol, "es_auc hand example");
    c.near(es_auc_from(ca), 0.7727272727272727, tol, "es_auc constant");

    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<std::size_t> y{0, 0, 1, 1};
    c.near(auc(s, y), pair_count_auc(s, y), tol, "auc pair count");
    c.near(auc(s, y), 0.75, tol, "auc small example");
    c.near(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<std::size_t>{0, 0, 1, 1}), 1.0, tol,
           "auc separated");
    c.near(auc(std::vector<double>(6, 0.3), std::vector<std::size_t>{0, 1, 0, 1, 1, 0}), 0.5, tol, "auc ties");
    std::mt19937_64 rng(17);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + rng() % 150;
      std::vector<double> sc(n);
      std::vector<std::size_t> lab(n);
      for (std::size_t i = 0; i < n; ++i) {
        sc[i] = static_cast<double>(rng() % 10) / 10.0;
        lab[i] = rng() % 2;
      }
      lab[0] = 0;
      lab[1] = 1;
      c.near(auc(sc, lab), pair_count_auc(sc, lab), tol, "auc random " + std::to_string(t));
    }
    ScoredSet same{{0.1, 0.6, 0.4, 0.9, 0.1, 0.6, 0.4, 0.9}, {0, 0, 1, 1, 0, 0, 1, 1}, {0, 0, 0, 0, 1, 1, 1, 1}};
    c.near(es_auc(same), auc(same), tol, "es_auc equal cohorts");
  }

  // Area under the coverage curve
  {
    c.near(area_under_curve(curve_of({0, 1}, {0.83, 0.83}), CurveMetric::auc), 0.83, tol, "area rectangle");
    c.near(area_under_curve(curve_of({0, 1}, {1.0, 0.8}), CurveMetric::auc), 0.9, tol, "area linear");
    const auto f = [](double x) { return 0.9 + 0.1 * x - 0.15 * x * x; };
    std::vector<double> fx, fy, cx, cy;
    for (int i = 0; i < 1000; ++i) {
      fx.push_back(i / 999.0);
      fy.push_back(f(fx.back()));
    }
    for (int i = 0; i < 6; ++i) {
      cx.push_back(i / 5.0);
      cy.push_back(f(cx.back()));
    }
    double fine = 0.0;
    for (std::size_t i = 1; i < fx.size(); ++i) fine += 0.5 * (fx[i] - fx[i - 1]) * (fy[i] + fy[i - 1]);
    const double bound = 0.2 * 0.2 * 0.3 / 12.0;
    const double coarse = area_under_curve(curve_of(cx, cy), CurveMetric::auc);
    c.expect(std::abs(coarse - fine) <= bound + 1e-6, "area quadratic outside trapezoid bound");
  }

  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + fmt(secs, 2) + " s exceeds 10 s");
  report(1, "formula fidelity", c, fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 2. Gradient suite

Architecture small_arch() {
  Architecture a;
  a.backbone_hidden = 10;
  a.feature_dim = 6;
  a.gating_hidden = 5;
  return a;
}

Split small_split(std::uint64_t seed) {
  const Dataset d = synthesize_gaussian_cohorts(benchmark_config(Benchmark::biased, 400, 6, seed));
  const Dataset annotated = simulate_annotations(d, ExpertSpec{{0.9, 0.95}, 2, seed});
  return stratified_split(annotated, {0.6, 0.2, 0.2}, seed);
}

std::vector<std::size_t> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t size) {
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < size; ++i) b.push_back(rng() % n);
  return b;
}

struct GradStats {
  std::size_t configs = 0;
  std::size_t entries = 0;
  double worst = 0.0;
};

template <typename Loss>
void check_net(nn::NetParams& net, const nn::GradientSet& g, Loss loss, std::size_t stride, GradStats& st,
               Check& c, const std::string& tag) {
  auto one = [&](double analytic, double& x, const std::string& where) {
    const double num = test::central_diff(loss, x, 1e-6);
    const double err = test::rel_err(analytic, num, 1e-6);
    st.worst = std::max(st.worst, err);
    ++st.entries;
    if (!(err < 1e-4)) c.failures.push_back(tag + " " + where + " rel err " + std::to_string(err));
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    for (std::size_t k = 0; k < net.layers[li].weights.size(); k += stride) {
      one(g.layers[li].weights[k], net.layers[li].weights[k], "layer " + std::to_string(li) + " w" + std::to_string(k));
    }
    for (std::size_t k = 0; k < net.layers[li].bias.size(); ++k) {
      one(g.layers[li].bias[k], net.layers[li].bias[k], "layer " + std::to_string(li) + " b" + std::to_string(k));
    }
  }
}

void gradients_step0(Check& c, GradStats& st) {
  std::mt19937_64 rng(1);
  const Split sp = small_split(1);
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const FisOptions fis{static_cast<double>(seed % 5) / 4.0, seed % 4 == 1};
    Classifier clf{make_backbone(6, small_arch(), seed), make_head(small_arch(), 2, seed + 1)};
    const auto batch = random_batch(rng, sp.train.size(), 4 + seed % 5);
    const ClassifierGradient g = classifier_batch_gradient(clf, sp.train, batch, Weighting::fis, fis);
    auto losses_at = [&] {
      std::vector<double> l;
      for (std::size_t i : batch) l.push_back(bce(clf.predict(sp.train[i].features), sp.train[i].label));
      return l;
    };
    std::vector<std::size_t> cohorts;
    for (std::size_t i : batch) cohorts.push_back(sp.train[i].attribute);
    const auto frozen = weighted_batch_loss(losses_at(), cohorts, 2, Weighting::fis, fis,
                                            static_cast<double>(batch.size()));
    auto loss = [&] {
      if (!fis.detach_weights) return classifier_batch_loss(clf, sp.train, batch, Weighting::fis, fis);
      const auto l = losses_at();
      double s = 0.0;
      for (std::size_t i = 0; i < l.size(); ++i) s += frozen.grad_loss[i] * l[i];
      return s;
    };
    const std::string tag = "step0 config " + std::to_string(seed);
    check_net(clf.head, g.head, loss, 1, st, c, tag + " head");
    check_net(clf.backbone, g.backbone, loss, 3, st, c, tag + " backbone");
    ++st.configs;
  }
}

void gradients_step1(Check& c, GradStats& st) {
  std::mt19937_64 rng(2);
  const Split sp = small_split(2);
  const auto backbone = make_backbone(6, small_arch(), 3);
  const auto feats = extract_features(backbone, sp.train);
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    nn::NetParams head = make_head(small_arch(), 2, seed);
    const std::size_t cohort = seed % 2;
    const FisOptions fis{0.0, false};
    const auto batch = random_batch(rng, sp.train.size(), 4 + seed % 6);
    const HeadGradient g = head_batch_gradient(head, feats, sp.train, batch, cohort, fis);
    auto loss = [&] { return head_batch_loss(head, feats, sp.train, batch, cohort, fis); };
    check_net(head, g.head, loss, 1, st, c, "step1 config " + std::to_string(seed));
    ++st.configs;
  }
}

void gradients_step2(Check& c, GradStats& st) {
  std::mt19937_64 rng(3);
  const Split sp = small_split(3);
  const Architecture arch = small_arch();
  const auto backbone = make_backbone(6, arch, 4);
  const std::vector<nn::NetParams> heads{make_head(arch, 2, 5), make_head(arch, 2, 6)};
  const FrozenCases fc = freeze_cases(backbone, heads, sp.train);
  const auto users = clinician_labels(sp.train, 7);
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const GatingInput gin = seed % 2 ? GatingInput::features : GatingInput::raw;
    nn::NetParams gating = make_gating(gin == GatingInput::raw ? 6 : arch.feature_dim, 2, arch, seed);
    nn::NetParams consolidator = make_consolidator(2, 2, arch, seed + 100);
    for (auto& l : gating.layers) for (double& b : l.bias) b = 0.05;
    const FisOptions fis{0.5, seed % 3 == 2};
    const BudgetConfig budget{static_cast<double>(seed % 6) / 5.0, 4.0, seed % 4 != 1, seed % 4 != 2};
    const auto batch = random_batch(rng, sp.train.size(), 4);
    const Step2Gradient g = step2_batch_gradient(gating, consolidator, gin, sp.train, fc, users, batch, fis, budget);
    auto parts = [&](std::vector<std::vector<double>>& gates) {
      std::vector<double> l;
      for (std::size_t i : batch) {
        auto gv = nn::predict(gating, gin == GatingInput::raw ? std::span<const double>(sp.train[i].features)
                                                             : std::span<const double>(fc.features[i]));
        const auto p = nn::predict(consolidator, consolidator_input(fc.head_probs[i], gv, one_hot(users[i], 2)));
        l.push_back(bce(p, sp.train[i].label));
        gates.push_back(std::move(gv));
      }
      return l;
    };
    std::vector<std::size_t> cohorts;
    for (std::size_t i : batch) cohorts.push_back(sp.train[i].attribute);
    std::vector<std::vector<double>> g0;
    const auto frozen = fis_from_losses(parts(g0), cohorts, 2, fis, static_cast<double>(batch.size()));
    auto loss = [&] {
      if (!fis.detach_weights) {
        return step2_batch_loss(gating, consolidator, gin, sp.train, fc, users, batch, fis, budget);
      }
      std::vector<std::vector<double>> gates;
      const auto l = parts(gates);
      double s = budget_penalty(gates, budget).value;
      for (std::size_t i = 0; i < l.size(); ++i) s += frozen.grad_loss[i] * l[i];
      return s;
    };
    const std::string tag = "step2 config " + std::to_string(seed);
    check_net(gating, g.gating, loss, 1, st, c, tag + " gating");
    check_net(consolidator, g.consolidator, loss, 1, st, c, tag + " consolidator");
    ++st.configs;
  }
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  Check c;
  GradStats s0, s1, s2;
  gradients_step0(c, s0);
  gradients_step1(c, s1);
  gradients_step2(c, s2);
  for (const GradStats* s : {&s0, &s1, &s2}) c.expect(s->configs >= 20, "fewer than 20 configs on a path");
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime " + fmt(secs, 2) + " s exceeds 60 s");
  const double worst = std::max({s0.worst, s1.worst, s2.worst});
  std::ostringstream d;
  d << s0.configs << "/" << s1.configs << "/" << s2.configs << " configs, " << s0.entries + s1.entries + s2.entries
    << " entries, worst rel err " << std::scientific << std::setprecision(2) << worst << ", " << fmt(secs, 2) << " s";
  report(2, "gradient suite", c, d.str());
}

// ---------------------------------------------------------------------------
// 3. Expert simulation

Dataset plain(std::size_t n, std::size_t classes, std::size_t cohorts) {
  std::vector<Sample> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].id = i;
    rows[i].features = {static_cast<double>(i)};
    rows[i].label = (i / cohorts) % classes;
    rows[i].attribute = i % cohorts;
  }
  return Dataset(std::move(rows), Shape{1, classes, cohorts, 0});
}

void criterion_experts() {
  Check c;
  const std::size_t n = 100000;
  double worst_sigma = 0.0;
  for (const char* name : {"cmmd-like", "ham10000-like", "chexpert-like"}) {
    ExpertSpec spec = default_expert_spec(name);
    spec.annotators = 1;
    spec.seed = 23;
    const std::size_t a = spec.accuracies.size();
    const Dataset d = simulate_annotations(plain(a * n, 2, a), spec);
    std::vector<double> agree(a, 0.0);
    for (const Sample& s : d.samples()) agree[s.attribute] += s.annotations[0] == s.label;
    for (std::size_t j = 0; j < a; ++j) {
      const double p = spec.accuracies[j];
      const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
      const double z = std::abs(agree[j] / static_cast<double>(n) - p) / sd;
      worst_sigma = std::max(worst_sigma, z);
      c.expect(z <= 3.0, std::string(name) + " cohort " + std::to_string(j) + " off by " + fmt(z, 2) + " sd");
    }
  }
  c.expect(default_expert_spec("cmmd-like").accuracies == std::vector<double>{0.92, 0.98}, "cmmd-like accuracies");
  c.expect(default_expert_spec("ham10000-like").accuracies == std::vector<double>{0.98, 0.98},
           "ham10000-like accuracies");
  c.expect(default_expert_spec("chexpert-like").accuracies == std::vector<double>{0.95, 0.95},
           "chexpert-like accuracies");

  const std::size_t k = 3;
  const Dataset d = simulate_annotations(plain(250000, k, 1), ExpertSpec{{0.6}, 1, 11});
  std::vector<double> counts(k - 1, 0.0);
  double flips = 0.0;
  for (const Sample& s : d.samples()) {
    const std::size_t a = s.annotations[0];
    if (a == s.label) continue;
    counts[(a + k - s.label) % k - 1] += 1.0;
    flips += 1.0;
  }
  c.expect(flips >= 100000.0 * 0.95, "too few flips for the uniformity test");
  double chi2 = 0.0;
  const double expect = flips / static_cast<double>(k - 1);
  for (double x : counts) chi2 += (x - expect) * (x - expect) / expect;
  const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(k - 2)), chi2));
  c.expect(pval > 0.01, "flip destinations chi-square p = " + fmt(pval, 4));
  report(3, "expert simulation", c, "worst " + fmt(worst_sigma, 2) + " sd, flip chi-square p " + fmt(pval, 3));
}

// ---------------------------------------------------------------------------
// 4-8. Five-seed quickstart runs

struct SeedRun {
  std::uint64_t seed = 0;
  Evaluation eval;
};

RunConfig quickstart() { return load_run_config(fs::path(FAIRHAI_SOURCE_DIR) / "configs" / "quickstart.ini"); }

std::size_t worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

double summary_of(const Evaluation& ev, const std::string& method, bool es) {
  const MethodResult* m = ev.find(method);
  if (!m) throw std::runtime_error("method " + method + " missing from evaluation");
  return es ? m->curve.summary.auesacc : m->curve.summary.auacc;
}

void criterion_constraint(const std::vector<SeedRun>& runs) {
  Check c;
  double worst_drop = 0.0, worst_gate = 0.0;
  for (const auto& r : runs) {
    const auto& p = r.eval.pecman;
    const std::string tag = "seed " + std::to_string(r.seed);
    c.expect(p.coverages.size() == 6, tag + ": expected 6 epsilon models");
    for (std::size_t e = 1; e < p.coverages.size(); ++e) {
      const double drop = p.coverages[e - 1] - p.coverages[e];
      worst_drop = std::max(worst_drop, drop);
      c.expect(drop <= 0.03, tag + ": coverage falls by " + fmt(drop) + " at model " + std::to_string(e));
    }
    const double gate = p.mean_clinician_gate.back();
    worst_gate = std::max(worst_gate, gate);
    c.expect(gate <= 0.02, tag + ": epsilon = 1 mean clinician gate " + fmt(gate));
  }
  report(4, "constraint behavior", c,
         "worst coverage drop " + fmt(worst_drop) + ", worst epsilon=1 clinician gate " + fmt(worst_gate));
}

void criterion_collaboration(const std::vector<SeedRun>& runs) {
  Check c;
  std::vector<double> pec, erm, l2d;
  for (const auto& r : runs) {
    pec.push_back(summary_of(r.eval, "pecman", false));
    erm.push_back(summary_of(r.eval, "erm", false));
    l2d.push_back(summary_of(r.eval, "fair_l2d", false));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double d_erm = mean(pec) - mean(erm), d_l2d = mean(pec) - mean(l2d);
  const double p_erm = paired_t_one_sided(pec, erm), p_l2d = paired_t_one_sided(pec, l2d);
  c.expect(d_erm >= 0.005, "AUACC gain over erm " + fmt(d_erm));
  c.expect(d_l2d >= 0.005, "AUACC gain over fair_l2d " + fmt(d_l2d));
  c.expect(p_erm < 0.05, "t-test vs erm p = " + fmt(p_erm, 6));
  c.expect(p_l2d < 0.05, "t-test vs fair_l2d p = " + fmt(p_l2d, 6));
  std::ostringstream d;
  d << "AUACC pecman " << fmt(mean(pec)) << ", erm " << fmt(mean(erm)) << " (p " << std::scientific
    << std::setprecision(2) << p_erm << "), fair_l2d " << fmt(mean(l2d)) << " (p " << p_l2d << ")";
  report(5, "collaboration benefit", c, d.str());
}

void criterion_fairness(const std::vector<SeedRun>& runs) {
  Check c;
  double acc = 0.0, es = 0.0;
  for (const auto& r : runs) {
    acc += summary_of(r.eval, "pecman", false) - summary_of(r.eval, "erm", false);
    es += summary_of(r.eval, "pecman", true) - summary_of(r.eval, "erm", true);
  }
  acc /= static_cast<double>(runs.size());
  es /= static_cast<double>(runs.size());
  c.expect(es >= acc - 0.005, "AUESACC gain " + fmt(es) + " below AUACC gain " + fmt(acc) + " - 0.005");
  report(6, "fairness benefit", c, "AUESACC gain " + fmt(es) + ", AUACC gain " + fmt(acc));
}

void criterion_dominance(const std::vector<SeedRun>& runs) {
  Check c;
  std::size_t checked = 0;
  for (const auto& r : runs) {
    for (const auto& m : r.eval.methods) {
      const std::string tag = "seed " + std::to_string(r.seed) + " " + m.method;
      for (const auto& p : m.curve.curve.points) {
        c.expect(p.es_auc <= p.auc, tag + ": point at coverage " + fmt(p.coverage) + " has ES-AUC > AUC");
        ++checked;
      }
      const auto& s = m.curve.summary;
      c.expect(s.auesacc <= s.auacc, tag + ": AUESACC > AUACC");
      ++checked;
      for (std::size_t i = 0; i < s.replicate_auacc.size() && i < s.replicate_auesacc.size(); ++i) {
        c.expect(s.replicate_auesacc[i] <= s.replicate_auacc[i], tag + ": replicate " + std::to_string(i));
        ++checked;
      }
    }
  }
  report(7, "ES-AUC dominance", c, std::to_string(checked) + " evaluations");
}

void criterion_specialization(const std::vector<SeedRun>& runs) {
  Check c;
  std::size_t wins = 0, total = 0;
  for (const auto& r : runs) {
    const auto& t = r.eval.pecman.component_auc;
    for (std::size_t j = 0; j < 2; ++j) {
      ++total;
      if (t[j][j] > t[1 - j][j]) {
        ++wins;
      } else {
        c.failures.push_back("seed " + std::to_string(r.seed) + " cohort " + std::to_string(j) + ": head " +
                             std::to_string(j) + " " + fmt(t[j][j]) + " vs " + fmt(t[1 - j][j]));
      }
    }
  }
  report(8, "specialization", c, std::to_string(wins) + "/" + std::to_string(total) + " cohort-seed pairs");
}

// ---------------------------------------------------------------------------
// 9-10. Determinism, round-trips and runtime

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fairhai_acceptance_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void criteria_determinism_and_runtime() {
  RunConfig cfg = quickstart();
  cfg.seeds.clear();
  cfg.experiment = cfg.for_seed(1);

  TempDir serial("serial"), parallel("parallel");
  const auto t0 = Clock::now();
  {
    cli::Workspace ws(serial.path);
    cli::run_stage(ws, cfg, 1);
  }
  const double serial_secs = seconds_since(t0);
  {
    cli::Workspace ws(parallel.path);
    cli::run_stage(ws, cfg, worker_threads());
  }

  Check c9;
  const auto a = files_under(serial.path), b = files_under(parallel.path);
  c9.expect(a == b, "runs produced different file sets");
  std::size_t compared = 0, curves = 0;
  for (const auto& rel : a) {
    if (!fs::exists(parallel.path / rel)) continue;
    const bool is_curve = rel.begin()->string() == "curves" || rel == "summary.csv";
    if (is_curve) ++curves;
    c9.expect(slurp(serial.path / rel) == slurp(parallel.path / rel), rel.string() + " differs between runs");
    ++compared;
  }
  c9.expect(curves >= 4, "expected three curve CSVs and summary.csv");

  // Checkpoints: every file reloads and re-serializes to the same bytes.
  std::size_t checkpoints = 0;
  for (const auto& rel : a) {
    if (rel.extension() != ".fhai") continue;
    const std::string bytes = slurp(serial.path / rel);
    std::istringstream in(bytes);
    std::ostringstream out;
    nn::save_checkpoint(nn::load_checkpoint(in), out);
    c9.expect(out.str() == bytes, rel.string() + " checkpoint round-trip differs");
    ++checkpoints;
  }
  c9.expect(checkpoints > 0, "no checkpoints found");

  // Dataset CSVs: load and write back.
  std::size_t datasets = 0;
  for (const char* rel : {cli::kDatasetCsv, cli::kAnnotatedCsv}) {
    const std::string bytes = slurp(serial.path / rel);
    std::istringstream in(bytes);
    const std::string header = bytes.substr(0, bytes.find('\n'));
    const std::size_t annotators = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) -
                                   (cfg.experiment.data.features + 2);
    Shape shape{cfg.experiment.data.features, 2, 2, annotators};
    std::ostringstream out;
    write_dataset_csv(load_dataset_csv(in, shape), out);
    c9.expect(out.str() == bytes, std::string(rel) + " dataset round-trip differs");
    ++datasets;
  }
  report(9, "determinism and round-trips", c9,
         std::to_string(compared) + " files identical across runs, " + std::to_string(checkpoints) +
             " checkpoints, " + std::to_string(datasets) + " dataset CSVs");

  Check c10;
  c10.expect(serial_secs < 300.0, "single-threaded quickstart took " + fmt(serial_secs, 1) + " s");
  report(10, "desk-scale budget", c10, "single-threaded quickstart " + fmt(serial_secs, 1) + " s");
}

}  // namespace
}  // namespace fairhai

int main() {
  using namespace fairhai;
  const auto guarded = [](int id, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      ++g_failed;
      std::cout << "FAIL criterion " << id << ": exception: " << e.what() << "\n";
    }
  };
  guarded(1, criterion_formulas);
  guarded(2, criterion_gradients);
  guarded(3, criterion_experts);

  std::vector<SeedRun> runs;
  try {
    const RunConfig cfg = quickstart();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      runs.push_back({seed, run_experiment(cfg.for_seed(seed), worker_threads()).evaluation});
    }
  } catch (const std::exception& e) {
    for (int id = 4; id <= 8; ++id) {
      ++g_failed;
      std::cout << "FAIL criterion " << id << ": five-seed run failed: " << e.what() << "\n";
    }
  }
  if (runs.size() == 5) {
    guarded(4, [&] { criterion_constraint(runs); });
    guarded(5, [&] { criterion_collaboration(runs); });
    guarded(6, [&] { criterion_fairness(runs); });
    guarded(7, [&] { criterion_dominance(runs); });
    guarded(8, [&] { criterion_specialization(runs); });
  }
  guarded(9, criteria_determinism_and_runtime);

  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << "\n";
  return g_failed == 0 ? 0 : 1;
}
