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

#ifndef FAIRHAI_ARTIFACTS_HPP_
#define FAIRHAI_ARTIFACTS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "fairhai/config.hpp"
#include "fairhai/pipeline.hpp"

namespace fairhai {

namespace detail {

inline std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

inline std::vector<std::string> target_names(std::size_t cohorts) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < cohorts; ++j) out.push_back("head_" + std::to_string(j));
  out.push_back("clinician");
  return out;
}

}  // namespace detail

/// Directory-safe tag for an epsilon value, e.g. "eps_0.2".
inline std::string epsilon_tag(double eps) { return "eps_" + detail::format_double(eps); }

inline const char* kCurveHeader = "epsilon,coverage,auc,auc_ci_low,auc_ci_high,es_auc,esauc_ci_low,esauc_ci_high";
inline const char* kSummaryHeader = "method,auacc,auesacc,auacc_ci_low,auacc_ci_high,auesacc_ci_low,auesacc_ci_high";

/// Endpoints without an epsilon leave the first cell empty.
inline void write_curve_csv(const CoverageCurve& c, std::ostream& out) {
  out << kCurveHeader << '\n';
  for (const auto& p : c.points) {
    detail::write_row(out, {detail::cell(p.epsilon), detail::cell(p.coverage), detail::cell(p.auc),
                            detail::cell(p.auc_ci_low), detail::cell(p.auc_ci_high), detail::cell(p.es_auc),
                            detail::cell(p.esauc_ci_low), detail::cell(p.esauc_ci_high)});
  }
}

struct SummaryRow {
  std::string method;
  double auacc = 0.0;
  double auesacc = 0.0;
  Interval auacc_ci;
  Interval auesacc_ci;

  bool operator==(const SummaryRow&) const = default;
};

inline std::vector<SummaryRow> summary_rows(const Evaluation& ev) {
  std::vector<SummaryRow> out;
  for (const auto& m : ev.methods) {
    const auto& s = m.curve.summary;
    out.push_back({m.method, s.auacc, s.auesacc, s.auacc_ci, s.auesacc_ci});
  }
  return out;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    detail::write_row(out, {r.method, detail::cell(r.auacc), detail::cell(r.auesacc), detail::cell(r.auacc_ci.low),
                            detail::cell(r.auacc_ci.high), detail::cell(r.auesacc_ci.low),
                            detail::cell(r.auesacc_ci.high)});
  }
}

inline std::vector<SummaryRow> read_summary_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kSummaryHeader) {
    throw SchemaError(source + ": expected header '" + kSummaryHeader + "'");
  }
  std::vector<SummaryRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_view(detail::trim(line), ',');
    if (cells.size() != 7) throw SchemaError(source + ": row " + std::to_string(row) + " has " +
                                             std::to_string(cells.size()) + " columns, expected 7");
    SummaryRow r;
    r.method = std::string(cells[0]);
    double* dst[] = {&r.auacc, &r.auesacc, &r.auacc_ci.low, &r.auacc_ci.high, &r.auesacc_ci.low, &r.auesacc_ci.high};
    for (std::size_t c = 0; c < 6; ++c) {
      if (!detail::parse_double(cells[c + 1], *dst[c])) {
        throw SchemaError(source + ": row " + std::to_string(row) + " column " + std::to_string(c + 2) +
                          " is not a number");
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// One row per epsilon model: realized coverage, share of set gates per
/// target, and the mean soft clinician gate.
inline void write_deferral_budget_csv(const PecmanEvaluation& ev, const std::vector<double>& epsilons,
                                      std::size_t cohorts, std::ostream& out) {
  std::vector<std::string> header{"epsilon", "coverage"};
  for (const auto& t : detail::target_names(cohorts)) header.push_back(t);
  header.push_back("mean_clinician_gate");
  detail::write_row(out, header);
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    std::vector<std::string> row{detail::cell(epsilons[e]), detail::cell(ev.coverages[e])};
    for (double v : ev.deferral_rates[e]) row.push_back(detail::cell(v));
    row.push_back(detail::cell(ev.mean_clinician_gate[e]));
    detail::write_row(out, row);
  }
}

/// Rows are true cohorts, columns the selected targets.
inline void write_confusion_csv(const std::vector<std::vector<double>>& m, std::size_t cohorts, std::ostream& out) {
  std::vector<std::string> header{"cohort"};
  for (const auto& t : detail::target_names(cohorts)) header.push_back(t);
  detail::write_row(out, header);
  for (std::size_t a = 0; a < m.size(); ++a) {
    std::vector<std::string> row{std::to_string(a)};
    for (double v : m[a]) row.push_back(detail::cell(v));
    detail::write_row(out, row);
  }
}

/// Rows are components (heads, clinician), columns cohorts then overall.
/// Cells where a cohort has a single class are left empty.
inline void write_component_auc_csv(const std::vector<std::vector<double>>& table, std::size_t cohorts,
                                    std::ostream& out) {
  std::vector<std::string> header{"component"};
  for (std::size_t a = 0; a < cohorts; ++a) header.push_back("cohort_" + std::to_string(a));
  header.push_back("overall");
  detail::write_row(out, header);
  const auto names = detail::target_names(cohorts);
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::vector<std::string> row{names[r]};
    for (double v : table[r]) row.push_back(detail::cell(v));
    detail::write_row(out, row);
  }
}

inline void write_trace_csv(const std::vector<TraceRow>& rows, std::size_t cohorts, std::ostream& out) {
  std::vector<std::string> header{"id", "attribute"};
  for (std::size_t j = 0; j < cohorts; ++j) header.push_back("head_" + std::to_string(j) + "_score");
  header.push_back("clinician_label");
  for (const auto& t : detail::target_names(cohorts)) header.push_back("soft_" + t);
  for (const auto& t : detail::target_names(cohorts)) header.push_back("hard_" + t);
  for (const char* h : {"final_score", "final_label", "truth"}) header.push_back(h);
  detail::write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> row{std::to_string(r.id), std::to_string(r.attribute)};
    for (double v : r.head_scores) row.push_back(detail::cell(v));
    row.push_back(std::to_string(r.clinician_label));
    for (double v : r.soft) row.push_back(detail::cell(v));
    for (auto h : r.hard) row.push_back(std::to_string(static_cast<int>(h)));
    row.push_back(detail::cell(r.final_score));
    row.push_back(std::to_string(r.final_label));
    row.push_back(std::to_string(r.truth));
    detail::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Significance

struct TtestRow {
  std::string metric;  // auacc or auesacc
  std::string method;
  std::string baseline;
  std::string pairing;
  std::size_t n = 0;
  double mean_diff = 0.0;
  double p_value = 0.5;
};

/// PecMan against every other method, one-sided (PecMan larger). Seed
/// pairing uses one area per evaluation; replicate pairing concatenates the
/// bootstrap areas of all evaluations, which share resamples per seed.
inline std::vector<TtestRow> paired_tests(const std::vector<const Evaluation*>& evals, TtestPairing pairing) {
  std::vector<TtestRow> out;
  if (evals.empty() || !evals.front()->find("pecman")) return out;
  for (const auto& m : evals.front()->methods) {
    if (m.method == "pecman") continue;
    for (const char* metric : {"auacc", "auesacc"}) {
      const bool es = std::string(metric) == "auesacc";
      std::vector<double> a, b;
      for (const Evaluation* ev : evals) {
        const auto& pa = ev->find("pecman")->curve.summary;
        const auto* mb = ev->find(m.method);
        if (!mb) throw ValidationError("ttest: method '" + m.method + "' missing from one seed");
        const auto& pb = mb->curve.summary;
        if (pairing == TtestPairing::seeds) {
          a.push_back(es ? pa.auesacc : pa.auacc);
          b.push_back(es ? pb.auesacc : pb.auacc);
        } else {
          const auto& ra = es ? pa.replicate_auesacc : pa.replicate_auacc;
          const auto& rb = es ? pb.replicate_auesacc : pb.replicate_auacc;
          a.insert(a.end(), ra.begin(), ra.end());
          b.insert(b.end(), rb.begin(), rb.end());
        }
      }
      if (a.size() < 2 || a.size() != b.size()) continue;
      TtestRow row{metric, "pecman", m.method, pairing == TtestPairing::seeds ? "seeds" : "replicates", a.size()};
      double diff = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] - b[i];
      row.mean_diff = diff / static_cast<double>(a.size());
      row.p_value = paired_t_one_sided(a, b);
      out.push_back(std::move(row));
    }
  }
  return out;
}

inline void write_ttest_csv(const std::vector<TtestRow>& rows, std::ostream& out) {
  out << "metric,method,baseline,pairing,n,mean_diff,p_value\n";
  for (const auto& r : rows) {
    detail::write_row(out, {r.metric, r.method, r.baseline, r.pairing, std::to_string(r.n), detail::cell(r.mean_diff),
                            detail::cell(r.p_value)});
  }
}

/// Per-seed areas of a multi-seed run.
inline void write_seed_summary_csv(const std::vector<std::uint64_t>& seeds, const std::vector<const Evaluation*>& evals,
                                   std::ostream& out) {
  out << "seed,method,auacc,auesacc\n";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (const auto& m : evals[s]->methods) {
      detail::write_row(out, {std::to_string(seeds[s]), m.method, detail::cell(m.curve.summary.auacc),
                              detail::cell(m.curve.summary.auesacc)});
    }
  }
}

// ---------------------------------------------------------------------------
// Text rendering

/// Left-aligned first column, right-aligned numbers, two-space gutters.
inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string v = c < r.size() ? r[c] : "";
      const std::string pad(width[c] - v.size(), ' ');
      if (c) s += "  ";
      s += c == 0 ? v + pad : pad + v;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

inline std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string render_summary(const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    body.push_back({r.method, fixed(r.auacc), "[" + fixed(r.auacc_ci.low) + ", " + fixed(r.auacc_ci.high) + "]",
                    fixed(r.auesacc), "[" + fixed(r.auesacc_ci.low) + ", " + fixed(r.auesacc_ci.high) + "]"});
  }
  return render_table({"method", "AUACC", "CI", "AUESACC", "CI"}, body);
}

}  // namespace fairhai

#endif  // FAIRHAI_ARTIFACTS_HPP_
