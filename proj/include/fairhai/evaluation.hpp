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

#ifndef FAIRHAI_EVALUATION_HPP_
#define FAIRHAI_EVALUATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fairhai/detail/common.hpp"
#include "fairhai/error.hpp"
#include "fairhai/model.hpp"

namespace fairhai {

/// Positive-class scores with their labels and cohorts.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::size_t> labels;  // 0 or 1
  std::vector<std::size_t> attributes;

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (labels.size() != scores.size() || attributes.size() != scores.size()) {
      throw ShapeError("scored set: lists differ in length");
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw ValidationError("scored set: non-finite score");
    }
    for (std::size_t l : labels) {
      if (l > 1) throw ValidationError("scored set: labels must be binary");
    }
  }

  ScoredSet select(std::span<const std::size_t> idx) const {
    ScoredSet out;
    out.scores.reserve(idx.size());
    out.labels.reserve(idx.size());
    out.attributes.reserve(idx.size());
    for (std::size_t i : idx) {
      out.scores.push_back(scores[i]);
      out.labels.push_back(labels[i]);
      out.attributes.push_back(attributes[i]);
    }
    return out;
  }
};

/// Mann-Whitney AUC via the rank sum with mid-ranks for ties:
/// (#concordant + 0.5 #tied) / (#pos #neg).
inline double auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the mid-rank is an integer, so the statistic is exact.
  std::uint64_t pos = 0;
  std::uint64_t rank2_pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const std::uint64_t rank2 = start + 1 + end;
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] == 1) {
        ++pos;
        rank2_pos += rank2;
      }
    }
    start = end;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw ValidationError("auc: need at least one positive and one negative label");
  const std::uint64_t u2 = rank2_pos - pos * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline double auc(const ScoredSet& s) {
  s.validate();
  return auc(s.scores, s.labels);
}

struct CohortAuc {
  double overall = 0.0;
  std::vector<std::size_t> cohorts;  // cohorts present in the set, ascending
  std::vector<double> per_cohort;
};

inline CohortAuc cohort_aucs(const ScoredSet& s) {
  s.validate();
  CohortAuc out;
  out.overall = auc(s.scores, s.labels);
  std::size_t max_a = 0;
  for (std::size_t a : s.attributes) max_a = std::max(max_a, a);
  std::vector<std::vector<double>> sc(max_a + 1);
  std::vector<std::vector<std::size_t>> lb(max_a + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    sc[s.attributes[i]].push_back(s.scores[i]);
    lb[s.attributes[i]].push_back(s.labels[i]);
  }
  for (std::size_t a = 0; a <= max_a; ++a) {
    if (sc[a].empty()) continue;
    const auto pos = static_cast<std::size_t>(std::count(lb[a].begin(), lb[a].end(), std::size_t{1}));
    if (pos == 0 || pos == lb[a].size()) {
      throw ValidationError("es_auc: cohort " + std::to_string(a) + " has a single class");
    }
    out.cohorts.push_back(a);
    out.per_cohort.push_back(auc(sc[a], lb[a]));
  }
  return out;
}

/// Equity-scaled AUC: AUC / (1 + sum_a |AUC - AUC_a|) over the cohorts present.
inline double es_auc_from(const CohortAuc& c) {
  double gap = 0.0;
  for (double a : c.per_cohort) gap += std::abs(c.overall - a);
  return c.overall / (1.0 + gap);
}

inline double es_auc(const ScoredSet& s) { return es_auc_from(cohort_aucs(s)); }

/// Fraction of cases whose clinician gate is off.
inline double realized_coverage(std::span<const GateDecision> decisions) {
  if (decisions.empty()) throw ValidationError("realized_coverage: no decisions");
  std::size_t ai_only = 0;
  for (const auto& d : decisions) ai_only += d.clinician() ? 0 : 1;
  return static_cast<double>(ai_only) / static_cast<double>(decisions.size());
}

// ---------------------------------------------------------------------------
// Bootstrap

/// Linear-interpolation quantile of sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

inline Interval percentile_interval(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  return Interval{sorted_quantile(values, alpha / 2.0), sorted_quantile(values, 1.0 - alpha / 2.0)};
}

/// Resampling plan with replacement, stratified by class so every replicate
/// keeps the original positive and negative counts.
class StratifiedResampler {
 public:
  explicit StratifiedResampler(std::span<const std::size_t> labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos_ : neg_).push_back(i);
  }

  std::vector<std::size_t> draw(std::uint64_t seed, std::uint64_t replicate, std::uint64_t attempt) const {
    Rng rng = detail::make_rng({seed, 0xb007, replicate, attempt});
    std::vector<std::size_t> idx;
    idx.reserve(pos_.size() + neg_.size());
    for (std::size_t k = 0; k < pos_.size(); ++k) idx.push_back(pos_[detail::uniform_index(rng, pos_.size())]);
    for (std::size_t k = 0; k < neg_.size(); ++k) idx.push_back(neg_[detail::uniform_index(rng, neg_.size())]);
    return idx;
  }

 private:
  std::vector<std::size_t> pos_, neg_;
};

struct BootstrapOptions {
  std::size_t replicates = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t max_retries = 10;
};

/// Percentile interval of `metric` over class-stratified resamples. A
/// replicate on which the metric throws ValidationError is redrawn.
inline Interval bootstrap_ci(const std::function<double(const ScoredSet&)>& metric, const ScoredSet& s,
                             const BootstrapOptions& opt = {}) {
  s.validate();
  if (opt.replicates == 0) throw ValidationError("bootstrap: need at least one replicate");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw ValidationError("bootstrap: level must lie in (0, 1)");
  StratifiedResampler sampler(s.labels);
  std::vector<double> values;
  values.reserve(opt.replicates);
  for (std::size_t r = 0; r < opt.replicates; ++r) {
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        values.push_back(metric(s.select(sampler.draw(opt.seed, r, attempt))));
        break;
      } catch (const ValidationError&) {
        if (attempt >= opt.max_retries) throw ValidationError("bootstrap: metric undefined after retries");
      }
    }
  }
  return percentile_interval(std::move(values), opt.level);
}

// ---------------------------------------------------------------------------
// Paired one-sided t-test

/// p-value for H1: mean(a) > mean(b) from the paired t statistic with n - 1
/// degrees of freedom. Identical lists (zero variance of the differences)
/// give 0.5; a constant non-zero shift gives 0 or 1.
inline double paired_t_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test: lists differ in length");
  if (a.size() < 2) throw ValidationError("paired t-test: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (mean == 0.0) return 0.5;
    return mean > 0.0 ? 0.0 : 1.0;
  }
  const double t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  return boost::math::cdf(boost::math::complement(dist, t));
}

// ---------------------------------------------------------------------------
// Coverage curves

/// One method evaluated at one operating point on the test set.
struct OperatingPoint {
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // NaN for endpoints
  double coverage = 0.0;
  std::vector<double> scores;
};

struct CurvePoint {
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double coverage = 0.0;
  double auc = 0.0;
  double auc_ci_low = 0.0;
  double auc_ci_high = 0.0;
  double es_auc = 0.0;
  double esauc_ci_low = 0.0;
  double esauc_ci_high = 0.0;
};

struct CoverageCurve {
  std::vector<CurvePoint> points;

  void validate() const {
    if (points.size() < 2) throw ValidationError("curve needs at least two points");
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].coverage > points[i - 1].coverage)) {
        throw ValidationError("curve coverages must be strictly ascending");
      }
    }
    if (points.front().coverage != 0.0 || points.back().coverage != 1.0) {
      throw ValidationError("curve must include the 0 and 1 coverage endpoints");
    }
  }
};

enum class CurveMetric { auc, es_auc };

/// Trapezoidal area over coverage in [0, 1].
inline double area_under_curve(const CoverageCurve& curve, CurveMetric metric) {
  curve.validate();
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i - 1];
    const auto& q = curve.points[i];
    const double y0 = metric == CurveMetric::auc ? p.auc : p.es_auc;
    const double y1 = metric == CurveMetric::auc ? q.auc : q.es_auc;
    area += 0.5 * (q.coverage - p.coverage) * (y0 + y1);
  }
  return area;
}

/// Trapezoid over explicit (x, y) pairs sorted by x.
inline double trapezoid(std::span<const double> xs, std::span<const double> ys) {
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) area += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
  return area;
}

struct CurveSummary {
  double auacc = 0.0;
  double auesacc = 0.0;
  Interval auacc_ci;
  Interval auesacc_ci;
  /// Per-replicate areas in replicate order; empty without a bootstrap.
  std::vector<double> replicate_auacc;
  std::vector<double> replicate_auesacc;
};

struct EvaluatedCurve {
  CoverageCurve curve;
  CurveSummary summary;
};

/// Sorts operating points by coverage, keeps the highest-AUC point among
/// equal coverages, and attaches bootstrap intervals. Each replicate
/// resamples the test cases once and re-scores every point, so the
/// AUACC/AUESACC intervals respect the pairing across points.
inline EvaluatedCurve evaluate_curve(std::vector<OperatingPoint> points, std::span<const std::size_t> labels,
                                     std::span<const std::size_t> attributes, const BootstrapOptions& opt) {
  if (points.empty()) throw ValidationError("evaluate_curve: no operating points");
  const std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::vector<std::size_t> att(attributes.begin(), attributes.end());
  struct Scored {
    OperatingPoint op;
    double auc;
    double es_auc;
  };
  std::vector<Scored> scored;
  for (auto& p : points) {
    if (p.scores.size() != lab.size()) throw ShapeError("evaluate_curve: score count differs from test size");
    if (p.coverage < 0.0 || p.coverage > 1.0) throw ValidationError("evaluate_curve: coverage outside [0, 1]");
    ScoredSet s{p.scores, lab, att};
    const CohortAuc c = cohort_aucs(s);
    scored.push_back(Scored{std::move(p), c.overall, es_auc_from(c)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& l, const Scored& r) { return l.op.coverage < r.op.coverage; });
  std::vector<Scored> kept;
  for (auto& s : scored) {
    if (!kept.empty() && kept.back().op.coverage == s.op.coverage) {
      if (s.auc > kept.back().auc) kept.back() = std::move(s);
    } else {
      kept.push_back(std::move(s));
    }
  }
  EvaluatedCurve out;
  for (const auto& s : kept) {
    CurvePoint cp;
    cp.epsilon = s.op.epsilon;
    cp.coverage = s.op.coverage;
    cp.auc = s.auc;
    cp.es_auc = s.es_auc;
    out.curve.points.push_back(cp);
  }
  out.curve.validate();
  out.summary.auacc = area_under_curve(out.curve, CurveMetric::auc);
  out.summary.auesacc = area_under_curve(out.curve, CurveMetric::es_auc);

  if (opt.replicates > 0) {
    StratifiedResampler sampler(lab);
    const std::size_t np = kept.size();
    std::vector<std::vector<double>> rep_auc(np), rep_es(np);
    std::vector<double> rep_area, rep_es_area;
    std::vector<double> xs(np), ya(np), ye(np);
    for (std::size_t k = 0; k < np; ++k) xs[k] = kept[k].op.coverage;
    for (std::size_t r = 0; r < opt.replicates; ++r) {
      for (std::size_t attempt = 0;; ++attempt) {
        try {
          const auto idx = sampler.draw(opt.seed, r, attempt);
          ScoredSet base{{}, {}, {}};
          base.labels.reserve(idx.size());
          base.attributes.reserve(idx.size());
          for (std::size_t i : idx) {
            base.labels.push_back(lab[i]);
            base.attributes.push_back(att[i]);
          }
          for (std::size_t k = 0; k < np; ++k) {
            base.scores.clear();
            for (std::size_t i : idx) base.scores.push_back(kept[k].op.scores[i]);
            const CohortAuc c = cohort_aucs(base);
            ya[k] = c.overall;
            ye[k] = es_auc_from(c);
          }
          break;
        } catch (const ValidationError&) {
          if (attempt >= opt.max_retries) throw ValidationError("bootstrap: metric undefined after retries");
        }
      }
      for (std::size_t k = 0; k < np; ++k) {
        rep_auc[k].push_back(ya[k]);
        rep_es[k].push_back(ye[k]);
      }
      rep_area.push_back(trapezoid(xs, ya));
      rep_es_area.push_back(trapezoid(xs, ye));
    }
    for (std::size_t k = 0; k < np; ++k) {
      const Interval ia = percentile_interval(rep_auc[k], opt.level);
      const Interval ie = percentile_interval(rep_es[k], opt.level);
      auto& cp = out.curve.points[k];
      cp.auc_ci_low = ia.low;
      cp.auc_ci_high = ia.high;
      cp.esauc_ci_low = ie.low;
      cp.esauc_ci_high = ie.high;
    }
    out.summary.auacc_ci = percentile_interval(rep_area, opt.level);
    out.summary.auesacc_ci = percentile_interval(rep_es_area, opt.level);
    out.summary.replicate_auacc = std::move(rep_area);
    out.summary.replicate_auesacc = std::move(rep_es_area);
  } else {
    for (auto& cp : out.curve.points) {
      cp.auc_ci_low = cp.auc_ci_high = cp.auc;
      cp.esauc_ci_low = cp.esauc_ci_high = cp.es_auc;
    }
    out.summary.auacc_ci = {out.summary.auacc, out.summary.auacc};
    out.summary.auesacc_ci = {out.summary.auesacc, out.summary.auesacc};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deferral analysis

/// Share of all set gates going to each target (A heads, then the clinician).
inline std::vector<double> deferral_distribution(std::span<const GateDecision> decisions) {
  if (decisions.empty()) throw ValidationError("deferral_distribution: no decisions");
  const std::size_t width = decisions.front().hard.size();
  std::vector<double> out(width, 0.0);
  double total = 0.0;
  for (const auto& d : decisions) {
    for (std::size_t t = 0; t < width; ++t) {
      out[t] += d.hard[t];
      total += d.hard[t];
    }
  }
  if (total > 0.0) for (double& v : out) v /= total;
  return out;
}

/// Rows: true cohort. Columns: selected target. Cells are shares of the
/// total number of set gates, so the matrix sums to 1 whenever any gate is set.
inline std::vector<std::vector<double>> deferral_confusion(std::span<const GateDecision> decisions,
                                                           std::span<const std::size_t> attributes,
                                                           std::size_t cohorts) {
  if (decisions.size() != attributes.size()) throw ShapeError("deferral_confusion: length mismatch");
  const std::size_t width = cohorts + 1;
  std::vector<std::vector<double>> m(cohorts, std::vector<double>(width, 0.0));
  double total = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].hard.size() != width) throw ShapeError("deferral_confusion: gate width mismatch");
    for (std::size_t t = 0; t < width; ++t) {
      m[attributes[i]][t] += decisions[i].hard[t];
      total += decisions[i].hard[t];
    }
  }
  if (total > 0.0) {
    for (auto& row : m) for (double& v : row) v /= total;
  }
  return m;
}

/// Correct (diagonal) versus wrong (off-diagonal) head deferrals.
struct CohortRouting {
  double correct = 0.0;
  double wrong = 0.0;
};

inline CohortRouting cohort_routing(const std::vector<std::vector<double>>& confusion) {
  CohortRouting r;
  for (std::size_t a = 0; a < confusion.size(); ++a) {
    for (std::size_t t = 0; t < confusion.size(); ++t) (a == t ? r.correct : r.wrong) += confusion[a][t];
  }
  return r;
}

/// AUC of each component (rows: heads then clinician) per cohort, with the
/// overall AUC as the last column. Cells with a single class are NaN.
inline std::vector<std::vector<double>> component_auc_table(const std::vector<std::vector<double>>& component_scores,
                                                            std::span<const std::size_t> labels,
                                                            std::span<const std::size_t> attributes,
                                                            std::size_t cohorts) {
  std::vector<std::vector<double>> table;
  for (const auto& scores : component_scores) {
    std::vector<double> row;
    for (std::size_t a = 0; a < cohorts; ++a) {
      std::vector<double> s;
      std::vector<std::size_t> l;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (attributes[i] == a) {
          s.push_back(scores[i]);
          l.push_back(labels[i]);
        }
      }
      try {
        row.push_back(auc(s, l));
      } catch (const ValidationError&) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    row.push_back(auc(scores, labels));
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace fairhai

#endif  // FAIRHAI_EVALUATION_HPP_
