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

#ifndef FAIRHAI_EXPERTS_HPP_
#define FAIRHAI_EXPERTS_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fairhai/dataset.hpp"
#include "fairhai/detail/common.hpp"
#include "fairhai/error.hpp"

namespace fairhai {

/// Simulated clinicians: one accuracy per cohort, shared by all M annotators.
struct ExpertSpec {
  std::vector<double> accuracies;
  std::size_t annotators = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (annotators < 1) throw ValidationError("expert spec: need at least one annotator");
    for (double a : accuracies) {
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("expert spec: accuracies must lie in [0, 1]");
    }
  }
};

/// Per-cohort accuracies of the four reference benchmarks.
inline ExpertSpec default_expert_spec(std::string_view benchmark) {
  if (benchmark == "ham10000-like") return ExpertSpec{{0.98, 0.98}, 1, 0};
  if (benchmark == "chexpert-like") return ExpertSpec{{0.95, 0.95}, 1, 0};
  if (benchmark == "mimic-like") return ExpertSpec{{0.95, 0.95}, 1, 0};
  if (benchmark == "cmmd-like") return ExpertSpec{{0.92, 0.98}, 1, 0};
  throw ValidationError("unknown expert benchmark '" + std::string(benchmark) + "'");
}

/// Symmetric label noise: each annotator keeps the true label with the
/// cohort's accuracy and otherwise picks uniformly among the K - 1 wrong
/// classes. Draws come from a stream keyed by (seed, sample id, annotator).
inline Dataset simulate_annotations(const Dataset& d, const ExpertSpec& spec) {
  spec.validate();
  const Shape& shape = d.shape();
  if (spec.accuracies.size() < shape.cohorts) {
    throw ValidationError("expert spec covers " + std::to_string(spec.accuracies.size()) +
                          " cohorts but the dataset has " + std::to_string(shape.cohorts) +
                          " (cohort " + std::to_string(spec.accuracies.size()) + " missing)");
  }
  std::vector<std::vector<std::size_t>> annotations(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Sample& s = d[i];
    auto& out = annotations[i];
    out.resize(spec.annotators);
    for (std::size_t m = 0; m < spec.annotators; ++m) {
      Rng rng = detail::make_rng({spec.seed, 0xe4e7, s.id, m});
      if (detail::uniform01(rng) < spec.accuracies[s.attribute]) {
        out[m] = s.label;
      } else {
        std::size_t wrong = detail::uniform_index(rng, shape.classes - 1);
        out[m] = wrong >= s.label ? wrong + 1 : wrong;
      }
    }
  }
  return d.with_annotations(std::move(annotations), spec.annotators);
}

/// Index of the annotator whose label stands in for "the clinician" on a
/// sample; a fixed seeded draw so evaluations are reproducible.
inline std::size_t clinician_draw(const Sample& s, std::size_t annotators, std::uint64_t seed,
                                  std::uint64_t round = 0) {
  if (annotators == 0) throw ValidationError("sample has no annotations to draw from");
  if (annotators == 1) return 0;
  Rng rng = detail::make_rng({seed, 0xd7a3, s.id, round});
  return static_cast<std::size_t>(detail::uniform_index(rng, annotators));
}

inline std::vector<std::size_t> clinician_labels(const Dataset& d, std::uint64_t seed, std::uint64_t round = 0) {
  std::vector<std::size_t> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i] = d[i].annotations[clinician_draw(d[i], d.shape().annotators, seed, round)];
  }
  return out;
}

}  // namespace fairhai

#endif  // FAIRHAI_EXPERTS_HPP_
