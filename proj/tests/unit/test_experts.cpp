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

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "fairhai/experts.hpp"

namespace fairhai {
namespace {

/// One feature, labels cycling over K classes, cohorts alternating.
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

TEST(Experts, PerfectAccuracyCopiesTruth) {
  const Dataset d = simulate_annotations(plain(500, 3, 2), ExpertSpec{{1.0, 1.0}, 3, 4});
  EXPECT_EQ(d.shape().annotators, 3u);
  for (const Sample& s : d.samples()) {
    for (std::size_t a : s.annotations) EXPECT_EQ(a, s.label);
  }
}

TEST(Experts, BinomialAgreement) {
  const std::size_t n = 100000;
  const Dataset d = simulate_annotations(plain(2 * n, 2, 2), ExpertSpec{{0.98, 0.92}, 1, 7});
  std::vector<double> agree(2, 0.0);
  for (const Sample& s : d.samples()) agree[s.attribute] += s.annotations[0] == s.label;
  for (std::size_t a = 0; a < 2; ++a) {
    const double p = a == 0 ? 0.98 : 0.92;
    const double tol = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    EXPECT_NEAR(agree[a] / static_cast<double>(n), p, tol) << "cohort " << a;
  }
}

TEST(Experts, FlipsAreUniformOverWrongClasses) {
  const std::size_t k = 3;
  // 250k cases at accuracy 0.6 give about 100k flips.
  const Dataset d = simulate_annotations(plain(250000, k, 1), ExpertSpec{{0.6}, 1, 11});
  std::vector<double> counts(k - 1, 0.0);
  double flips = 0.0;
  for (const Sample& s : d.samples()) {
    const std::size_t a = s.annotations[0];
    if (a == s.label) continue;
    counts[(a + k - s.label) % k - 1] += 1.0;
    flips += 1.0;
  }
  EXPECT_GT(flips, 95000.0);
  double chi2 = 0.0;
  const double expect = flips / static_cast<double>(k - 1);
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  boost::math::chi_squared dist(static_cast<double>(k - 2));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << "chi2 " << chi2;
}

TEST(Experts, AnnotatorsAreIndependent) {
  const std::size_t n = 200000;
  const double p = 0.8;
  const Dataset d = simulate_annotations(plain(n, 2, 1), ExpertSpec{{p}, 2, 13});
  double same = 0.0;
  for (const Sample& s : d.samples()) {
    same += (s.annotations[0] == s.label) == (s.annotations[1] == s.label);
  }
  const double q = p * p + (1.0 - p) * (1.0 - p);
  EXPECT_NEAR(same / static_cast<double>(n), q, 3.0 * std::sqrt(q * (1.0 - q) / static_cast<double>(n)));
}

TEST(Experts, DeterministicAndSeeded) {
  const Dataset base = plain(1000, 2, 2);
  const ExpertSpec spec{{0.7, 0.9}, 2, 5};
  EXPECT_EQ(simulate_annotations(base, spec), simulate_annotations(base, spec));
  ExpertSpec other = spec;
  other.seed = 6;
  EXPECT_FALSE(simulate_annotations(base, spec) == simulate_annotations(base, other));
}

TEST(Experts, SpecErrors) {
  const Dataset base = plain(10, 2, 2);
  try {
    simulate_annotations(base, ExpertSpec{{0.9}, 1, 0});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("cohort 1"), std::string::npos);
  }
  EXPECT_THROW(simulate_annotations(base, ExpertSpec{{0.9, 1.1}, 1, 0}), ValidationError);
  EXPECT_THROW(simulate_annotations(base, ExpertSpec{{0.9, 0.9}, 0, 0}), ValidationError);
}

TEST(Experts, BenchmarkAccuracies) {
  EXPECT_EQ(default_expert_spec("cmmd-like").accuracies, (std::vector<double>{0.92, 0.98}));
  EXPECT_EQ(default_expert_spec("ham10000-like").accuracies, (std::vector<double>{0.98, 0.98}));
  EXPECT_EQ(default_expert_spec("chexpert-like").accuracies, (std::vector<double>{0.95, 0.95}));
  EXPECT_EQ(default_expert_spec("mimic-like").accuracies, (std::vector<double>{0.95, 0.95}));
  EXPECT_THROW(default_expert_spec("isic"), ValidationError);
}

TEST(Experts, ClinicianDraw) {
  const Dataset d = simulate_annotations(plain(3000, 2, 1), ExpertSpec{{0.5}, 3, 2});
  EXPECT_EQ(clinician_labels(d, 9), clinician_labels(d, 9));
  std::vector<double> picks(3, 0.0);
  for (const Sample& s : d.samples()) picks[clinician_draw(s, 3, 9)] += 1.0;
  for (double c : picks) EXPECT_NEAR(c / 3000.0, 1.0 / 3.0, 0.04);
  const Dataset one = simulate_annotations(plain(50, 2, 1), ExpertSpec{{0.5}, 1, 2});
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(clinician_labels(one, 3)[i], one[i].annotations[0]);
}

}  // namespace
}  // namespace fairhai
