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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fairhai/dataset.hpp"
#include "fairhai/evaluation.hpp"

namespace fairhai {
namespace {

SynthConfig two_cohort(std::size_t per_cohort, double gap, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.features = 3;
  cfg.variances = {1.0, 1.0, 1.0};
  cfg.seed = seed;
  for (int a = 0; a < 2; ++a) {
    CohortSpec c;
    c.count = per_cohort;
    c.priors = {0.5, 0.5};
    c.class_means = {{0.0, 0.0, 0.0}, {gap, 0.0, 0.0}};
    cfg.cohorts.push_back(c);
  }
  return cfg;
}

TEST(Csv, TwoRowIdentity) {
  std::istringstream in("id,f0,f1,attribute,label,annot0\n0,0.5,-1.25,1,0,1\n7,3,2e-3,0,1,1\n");
  const Dataset d = load_dataset_csv(in, Shape{2, 2, 2, 1});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].id, 0u);
  EXPECT_EQ(d[0].features, (std::vector<double>{0.5, -1.25}));
  EXPECT_EQ(d[0].attribute, 1u);
  EXPECT_EQ(d[0].label, 0u);
  EXPECT_EQ(d[0].annotations, (std::vector<std::size_t>{1}));
  EXPECT_EQ(d[1].id, 7u);
  EXPECT_EQ(d[1].features, (std::vector<double>{3.0, 0.002}));
  EXPECT_EQ(d[1].label, 1u);
}

TEST(Csv, AttributeOutOfRangeCitesRow) {
  std::string text = "id,f0,attribute,label\n";
  for (int r = 1; r <= 6; ++r) text += std::to_string(r) + ",0.1," + (r == 5 ? "3" : std::to_string(r % 2)) + ",0\n";
  std::istringstream in(text);
  try {
    load_dataset_csv(in, Shape{1, 2, 2, 0}, "data.csv");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("attribute"), std::string::npos) << msg;
  }
}

TEST(Csv, SchemaErrors) {
  const Shape shape{2, 2, 1, 0};
  auto load = [&](const std::string& text) {
    std::istringstream in(text);
    return load_dataset_csv(in, shape);
  };
  EXPECT_THROW(load(""), SchemaError);
  EXPECT_THROW(load("id,f0,attribute,label\n0,1,0,0\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n0,1,x,0,0\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n0,1,2,0,2\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n0,1,2,0\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n0,1,2,0,1,1\n"), SchemaError);
  EXPECT_THROW(load("id,f0,f1,attribute,label\n0,1,nan,0,1\n"), SchemaError);
  EXPECT_NO_THROW(load("id,f0,f1,attribute,label\r\n0,1,2,0,1\r\n"));
}

TEST(Csv, RoundTripIsByteIdentical) {
  SynthConfig cfg = two_cohort(60, 2.0, 3);
  const Dataset base = synthesize_gaussian_cohorts(cfg);
  std::vector<std::vector<std::size_t>> ann(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) ann[i] = {base[i].label, 1 - base[i].label};
  const Dataset d = base.with_annotations(ann, 2);
  std::ostringstream first;
  write_dataset_csv(d, first);
  std::istringstream in(first.str());
  const Dataset back = load_dataset_csv(in, d.shape());
  std::ostringstream second;
  write_dataset_csv(back, second);
  EXPECT_EQ(first.str(), second.str());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(back[i].features, d[i].features);
}

TEST(Synth, Deterministic) {
  const SynthConfig cfg = two_cohort(100, 1.0, 42);
  EXPECT_EQ(synthesize_gaussian_cohorts(cfg), synthesize_gaussian_cohorts(cfg));
  SynthConfig other = cfg;
  other.seed = 43;
  EXPECT_FALSE(synthesize_gaussian_cohorts(cfg) == synthesize_gaussian_cohorts(other));
}

TEST(Synth, IdenticalMeansAreIndistinguishable) {
  const Dataset d = synthesize_gaussian_cohorts(two_cohort(5000, 0.0, 8));
  std::vector<double> s;
  std::vector<std::size_t> y;
  for (const Sample& x : d.samples()) {
    s.push_back(x.features[0] + x.features[1] - x.features[2]);
    y.push_back(x.label);
  }
  EXPECT_NEAR(auc(s, y), 0.5, 0.02);
}

TEST(Synth, BayesScoreOnSeparatedCohort) {
  SynthConfig cfg = two_cohort(1000, 4.0, 5);
  cfg.cohorts[1].class_means[1] = {0.0, 0.0, 0.0};
  const Dataset d = synthesize_gaussian_cohorts(cfg);
  // Shared identity covariance: the log-likelihood ratio is monotone in x0.
  std::vector<double> s;
  std::vector<std::size_t> y;
  for (const Sample& x : d.samples()) {
    if (x.attribute != 0) continue;
    s.push_back(x.features[0]);
    y.push_back(x.label);
  }
  EXPECT_EQ(s.size(), 1000u);
  EXPECT_GE(auc(s, y), 0.97);
}

TEST(Synth, CountsAndInvariants) {
  for (auto b : {Benchmark::biased, Benchmark::unbiased, Benchmark::separable}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const SynthConfig cfg = benchmark_config(b, 500 + 37 * seed, 4 + seed, seed);
      const Dataset d = synthesize_gaussian_cohorts(cfg);
      EXPECT_EQ(d.size(), 500 + 37 * seed);
      EXPECT_EQ(d.shape().features, 4 + seed);
      std::set<std::uint64_t> ids;
      for (const Sample& s : d.samples()) {
        ids.insert(s.id);
        for (double v : s.features) EXPECT_TRUE(std::isfinite(v));
      }
      EXPECT_EQ(ids.size(), d.size());
      for (std::size_t a = 0; a < cfg.cohorts.size(); ++a) {
        const auto counts = class_counts(cfg.cohorts[a]);
        for (std::size_t k = 0; k < 2; ++k) {
          const auto n = std::count_if(d.samples().begin(), d.samples().end(),
                                       [&](const Sample& s) { return s.attribute == a && s.label == k; });
          EXPECT_EQ(static_cast<std::size_t>(n), counts[k]);
        }
      }
    }
  }
}

TEST(Synth, BadConfigs) {
  SynthConfig cfg = two_cohort(10, 1.0, 0);
  cfg.variances[1] = 0.0;
  EXPECT_THROW(synthesize_gaussian_cohorts(cfg), ValidationError);
  cfg = two_cohort(10, 1.0, 0);
  cfg.cohorts[0].priors = {0.6, 0.6};
  EXPECT_THROW(synthesize_gaussian_cohorts(cfg), ValidationError);
  cfg = two_cohort(10, 1.0, 0);
  cfg.cohorts[1].count = 0;
  EXPECT_THROW(synthesize_gaussian_cohorts(cfg), ValidationError);
  EXPECT_THROW(benchmark_config(Benchmark::biased, 1000, 3, 0), ValidationError);
  EXPECT_THROW(parse_benchmark("cmmd"), ValidationError);
}

TEST(Split, BalancedCounts) {
  const Dataset d = synthesize_gaussian_cohorts(two_cohort(200, 1.0, 1));
  const Split s = stratified_split(d, {0.5, 0.25, 0.25}, 9);
  EXPECT_EQ(s.train.size(), 200u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  for (const Dataset* part : {&s.train, &s.val, &s.test}) {
    const double expect = static_cast<double>(part->size()) / 4.0;
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t k = 0; k < 2; ++k) {
        const auto n = std::count_if(part->samples().begin(), part->samples().end(),
                                     [&](const Sample& x) { return x.attribute == a && x.label == k; });
        EXPECT_LE(std::abs(static_cast<double>(n) - expect), 1.0);
      }
    }
  }
}

TEST(Split, PartitionAndProportions) {
  const Dataset d = synthesize_gaussian_cohorts(benchmark_config(Benchmark::biased, 997, 8, 4));
  const std::array<double, 3> fr{0.6, 0.2, 0.2};
  const SplitIndices idx = stratified_split_indices(d, fr, 12);
  std::vector<std::size_t> all;
  for (const auto* p : {&idx.train, &idx.val, &idx.test}) all.insert(all.end(), p->begin(), p->end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), d.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  const std::array<const std::vector<std::size_t>*, 3> parts{&idx.train, &idx.val, &idx.test};
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t k = 0; k < 2; ++k) {
      std::size_t cell = 0;
      for (std::size_t i = 0; i < d.size(); ++i) cell += d[i].attribute == a && d[i].label == k;
      for (std::size_t p = 0; p < 3; ++p) {
        std::size_t n = 0;
        for (std::size_t i : *parts[p]) n += d[i].attribute == a && d[i].label == k;
        EXPECT_LE(std::abs(static_cast<double>(n) - fr[p] * static_cast<double>(cell)), 1.0);
      }
    }
  }
}

TEST(Split, Deterministic) {
  const Dataset d = synthesize_gaussian_cohorts(two_cohort(100, 1.0, 1));
  const auto a = stratified_split_indices(d, {0.5, 0.25, 0.25}, 3);
  const auto b = stratified_split_indices(d, {0.5, 0.25, 0.25}, 3);
  const auto c = stratified_split_indices(d, {0.5, 0.25, 0.25}, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, Errors) {
  const Dataset d = synthesize_gaussian_cohorts(two_cohort(100, 1.0, 1));
  EXPECT_THROW(stratified_split(d, {1.0 - 2e-10, 1e-10, 1e-10}, 0), ValidationError);
  EXPECT_THROW(stratified_split(d, {0.5, 0.5, 0.5}, 0), ValidationError);
  SynthConfig cfg = two_cohort(100, 1.0, 1);
  cfg.cohorts[1].count = 40;
  cfg.cohorts[1].priors = {0.95, 0.05};
  const Dataset thin = synthesize_gaussian_cohorts(cfg);
  try {
    stratified_split(thin, {0.5, 0.25, 0.25}, 0);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("label=1, attribute=1"), std::string::npos) << e.what();
  }
}

TEST(Batches, Sizes) {
  auto sizes = [](const std::vector<std::vector<std::size_t>>& b) {
    std::vector<std::size_t> s;
    for (const auto& x : b) s.push_back(x.size());
    return s;
  };
  EXPECT_EQ(sizes(batches(10, 4, 7, 0)), (std::vector<std::size_t>{4, 4, 2}));
  EXPECT_EQ(sizes(batches(9, 4, 7, 0)), (std::vector<std::size_t>{4, 5}));
  EXPECT_THROW(batches(10, 1, 7, 0), ValidationError);
  EXPECT_THROW(batches(1, 4, 7, 0), ValidationError);
}

TEST(Batches, CoverEachIndexOnce) {
  for (std::size_t n = 2; n < 60; ++n) {
    for (std::size_t bs = 2; bs < 9; ++bs) {
      std::vector<std::size_t> seen;
      for (const auto& b : batches(n, bs, n * 31 + bs, 2)) {
        EXPECT_GE(b.size(), 2u);
        seen.insert(seen.end(), b.begin(), b.end());
      }
      std::sort(seen.begin(), seen.end());
      ASSERT_EQ(seen.size(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], i);
    }
  }
}

TEST(Batches, SeededPermutations) {
  EXPECT_EQ(batches(50, 8, 7, 0), batches(50, 8, 7, 0));
  EXPECT_NE(batches(50, 8, 7, 0), batches(50, 8, 7, 1));
}

}  // namespace
}  // namespace fairhai
