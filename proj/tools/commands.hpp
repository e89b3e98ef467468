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

#ifndef FAIRHAI_TOOLS_COMMANDS_HPP_
#define FAIRHAI_TOOLS_COMMANDS_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "fairhai/artifacts.hpp"
#include "fairhai/config.hpp"
#include "fairhai/pipeline.hpp"
#include "manifest.hpp"

namespace fairhai::cli {

namespace fs = std::filesystem;

/// An output directory plus a journal of everything one invocation created
/// or overwrote, so a failed command can remove its partial outputs.
class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)), journal_(std::make_shared<Journal>()) {}

  const fs::path& root() const { return root_; }
  fs::path at(const std::string& rel) const { return root_ / rel; }
  bool has(const std::string& rel) const { return fs::exists(at(rel)); }

  /// Shares the journal; used for per-seed subdirectories.
  Workspace sub(const std::string& rel) const { return Workspace(root_ / rel, journal_); }

  template <typename Fn>
  void write(const std::string& rel, Fn&& fn) {
    const fs::path p = at(rel);
    make_dirs(p.parent_path());
    journal_->files.push_back(p);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    fn(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + p.string());
  }

  void write_text(const std::string& rel, const std::string& text) {
    write(rel, [&](std::ostream& o) { o << text; });
  }

  void write_checkpoint(const std::string& rel, const nn::NetParams& net) {
    write(rel, [&](std::ostream& o) { nn::save_checkpoint(net, o); });
  }

  void write_bundle(const std::string& rel, const PecmanModel& model) {
    const fs::path dir = at(rel);
    make_dirs(dir);
    journal_->dirs.push_back(dir);
    save_model_bundle(model, dir);
  }

  /// Config and manifest for this directory; call after all other writes.
  void seal(const RunConfig& cfg) {
    write_text("config.ini", to_ini(cfg));
    const std::string manifest = build_manifest(root_, cfg);
    write_text(kManifestName, manifest);
  }

  /// Removes every file and directory this invocation wrote, and any
  /// manifest that may now be stale.
  void rollback() noexcept {
    std::error_code ec;
    for (const auto& f : journal_->files) fs::remove(f, ec);
    for (const auto& d : journal_->dirs) fs::remove_all(d, ec);
    for (auto it = journal_->created.rbegin(); it != journal_->created.rend(); ++it) fs::remove_all(*it, ec);
    journal_->files.clear();
    journal_->dirs.clear();
    journal_->created.clear();
  }

 private:
  struct Journal {
    std::vector<fs::path> files;
    std::vector<fs::path> dirs;
    std::vector<fs::path> created;
  };

  Workspace(fs::path root, std::shared_ptr<Journal> j) : root_(std::move(root)), journal_(std::move(j)) {}

  void make_dirs(const fs::path& dir) {
    std::vector<fs::path> missing;
    for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path()) {
      missing.push_back(p);
      if (p == p.parent_path()) break;
    }
    for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
      fs::create_directory(*it);
      journal_->created.push_back(*it);
    }
    if (!fs::is_directory(dir)) throw ValidationError("output path " + dir.string() + " is not a directory");
  }

  fs::path root_;
  std::shared_ptr<Journal> journal_;
};

// ---------------------------------------------------------------------------
// Paths

inline const char* kDatasetCsv = "data/dataset.csv";
inline const char* kAnnotatedCsv = "data/annotated.csv";
inline std::string split_csv(const char* part) { return std::string("data/") + part + ".csv"; }
inline std::string head_checkpoint(std::size_t j) { return "checkpoints/step1/head_" + std::to_string(j) + ".fhai"; }
inline std::string bundle_dir(double eps) { return "checkpoints/pecman/" + epsilon_tag(eps); }

namespace detail {

inline fs::path require(const Workspace& ws, const std::string& rel, const char* stage, const char* producer) {
  const fs::path p = ws.at(rel);
  if (!fs::exists(p)) {
    throw ValidationError(std::string(stage) + ": missing " + p.string() + " (run '" + producer + "' first)");
  }
  return p;
}

inline Dataset read_dataset(const Workspace& ws, const std::string& rel, const RunConfig& cfg, const char* stage,
                            const char* producer) {
  const std::string p = require(ws, rel, stage, producer).string();
  return load_dataset_csv(p, sniff_csv_shape(p, cfg.experiment.data.classes, cfg.experiment.data.cohorts));
}

inline nn::NetParams read_checkpoint(const Workspace& ws, const std::string& rel, const char* stage,
                                     const char* producer) {
  return nn::load_checkpoint(require(ws, rel, stage, producer).string());
}

inline Split read_split(const Workspace& ws, const RunConfig& cfg, const char* stage) {
  Split s{read_dataset(ws, split_csv("train"), cfg, stage, "train"),
          read_dataset(ws, split_csv("val"), cfg, stage, "train"),
          read_dataset(ws, split_csv("test"), cfg, stage, "train"), {}};
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from the workspace and writes its outputs
// back, so `run` and the individual subcommands produce the same files.

inline void synth_stage(Workspace& ws, const RunConfig& cfg) {
  const Dataset d = prepare_data(cfg.experiment);
  ws.write(kDatasetCsv, [&](std::ostream& o) { write_dataset_csv(d, o); });
}

inline void annotate_stage(Workspace& ws, const RunConfig& cfg) {
  const Dataset d = detail::read_dataset(ws, kDatasetCsv, cfg, "annotate", "synth");
  const Dataset a = annotate(d, cfg.experiment);
  ws.write(kAnnotatedCsv, [&](std::ostream& o) { write_dataset_csv(a, o); });
}

inline void train_stage(Workspace& ws, const RunConfig& cfg) {
  const ExperimentConfig& x = cfg.experiment;
  const Dataset full = detail::read_dataset(ws, kAnnotatedCsv, cfg, "train", "annotate");
  if (full.shape().annotators == 0) throw ValidationError("train: " + ws.at(kAnnotatedCsv).string() + " has no annotations");
  const Split split = stratified_split(full, x.data.split, x.seeds().split);
  for (const char* part : {"train", "val", "test"}) {
    const Dataset& d = std::string(part) == "train" ? split.train : std::string(part) == "val" ? split.val : split.test;
    ws.write(split_csv(part), [&](std::ostream& o) { write_dataset_csv(d, o); });
  }
  const TrainedStages st = train_stages(split, x);
  ws.write_checkpoint("checkpoints/step0/backbone.fhai", st.step0.classifier.backbone);
  ws.write_checkpoint("checkpoints/step0/head.fhai", st.step0.classifier.head);
  ws.write("reports/step0.csv", [&](std::ostream& o) { write_train_report_csv(st.step0.report, o); });
  for (std::size_t j = 0; j < st.heads.size(); ++j) {
    ws.write_checkpoint(head_checkpoint(j), st.heads[j].head);
    ws.write("reports/step1_head_" + std::to_string(j) + ".csv",
             [&](std::ostream& o) { write_train_report_csv(st.heads[j].report, o); });
  }
  if (x.has_method("erm")) {
    ws.write_checkpoint("checkpoints/erm/backbone.fhai", st.erm.classifier.backbone);
    ws.write_checkpoint("checkpoints/erm/head.fhai", st.erm.classifier.head);
    ws.write("reports/erm.csv", [&](std::ostream& o) { write_train_report_csv(st.erm.report, o); });
  }
}

inline void sweep_stage(Workspace& ws, const RunConfig& cfg, std::size_t threads) {
  const ExperimentConfig& x = cfg.experiment;
  if (!x.has_method("pecman")) throw ValidationError("sweep: run.methods does not include pecman");
  const Split split = detail::read_split(ws, cfg, "sweep");
  const nn::NetParams backbone = detail::read_checkpoint(ws, "checkpoints/step0/backbone.fhai", "sweep", "train");
  std::vector<nn::NetParams> heads;
  for (std::size_t j = 0; j < split.train.shape().cohorts; ++j) {
    heads.push_back(detail::read_checkpoint(ws, head_checkpoint(j), "sweep", "train"));
  }
  const SweepResult s = run_sweep(split, backbone, heads, x, threads);
  for (std::size_t e = 0; e < s.epsilons.size(); ++e) {
    ws.write_bundle(bundle_dir(s.epsilons[e]), s.models[e]);
    ws.write("reports/step2_" + epsilon_tag(s.epsilons[e]) + ".csv",
             [&](std::ostream& o) { write_train_report_csv(s.reports[e], o); });
  }
}

inline Evaluation eval_stage(Workspace& ws, const RunConfig& cfg) {
  const ExperimentConfig& x = cfg.experiment;
  if (!ws.has("checkpoints")) {
    throw ValidationError("eval: no checkpoints under " + ws.at("checkpoints").string() +
                          " (run 'train' and 'sweep' first)");
  }
  const Split split = detail::read_split(ws, cfg, "eval");
  TrainedStages st;
  if (x.has_method("fair_l2d")) {
    st.step0.classifier = {detail::read_checkpoint(ws, "checkpoints/step0/backbone.fhai", "eval", "train"),
                           detail::read_checkpoint(ws, "checkpoints/step0/head.fhai", "eval", "train")};
  }
  if (x.has_method("erm")) {
    st.erm.classifier = {detail::read_checkpoint(ws, "checkpoints/erm/backbone.fhai", "eval", "train"),
                         detail::read_checkpoint(ws, "checkpoints/erm/head.fhai", "eval", "train")};
  }
  SweepResult sweep;
  if (x.has_method("pecman")) {
    sweep.epsilons = x.epsilons;
    for (double eps : x.epsilons) {
      const fs::path dir = detail::require(ws, bundle_dir(eps), "eval", "sweep");
      PecmanModel m = load_model_bundle(dir);
      if (m.trained_epsilon != eps) {
        throw ValidationError("eval: " + dir.string() + " was trained at epsilon " +
                              fairhai::detail::format_double(m.trained_epsilon));
      }
      sweep.models.push_back(std::move(m));
    }
  }
  Evaluation ev = evaluate_methods(x, split, st, x.has_method("pecman") ? &sweep : nullptr);
  const std::size_t a = split.test.shape().cohorts;
  for (const auto& m : ev.methods) {
    ws.write("curves/" + m.method + ".csv", [&](std::ostream& o) { write_curve_csv(m.curve.curve, o); });
  }
  ws.write("summary.csv", [&](std::ostream& o) { write_summary_csv(summary_rows(ev), o); });
  if (ev.has_pecman) {
    const auto& p = ev.pecman;
    ws.write("deferral/budget.csv", [&](std::ostream& o) { write_deferral_budget_csv(p, x.epsilons, a, o); });
    ws.write("deferral/component_auc.csv", [&](std::ostream& o) { write_component_auc_csv(p.component_auc, a, o); });
    for (std::size_t e = 0; e < x.epsilons.size(); ++e) {
      const std::string tag = epsilon_tag(x.epsilons[e]);
      ws.write("deferral/confusion_" + tag + ".csv", [&](std::ostream& o) { write_confusion_csv(p.confusion[e], a, o); });
      ws.write("traces/decisions_" + tag + ".csv", [&](std::ostream& o) { write_trace_csv(p.traces[e], a, o); });
    }
  }
  if (cfg.pairing == TtestPairing::replicates) {
    const auto rows = paired_tests({&ev}, TtestPairing::replicates);
    if (!rows.empty()) ws.write("ttest.csv", [&](std::ostream& o) { write_ttest_csv(rows, o); });
  }
  return ev;
}

/// Single-seed view of a run config, as written next to per-seed outputs.
inline RunConfig single_seed(const RunConfig& cfg, std::uint64_t seed) {
  RunConfig one = cfg;
  one.experiment = cfg.for_seed(seed);
  one.seeds.clear();
  return one;
}

/// Full pipeline. One seed writes straight into the workspace; several
/// seeds write into seed_<s>/ subdirectories plus cross-seed tables.
inline std::vector<Evaluation> run_stage(Workspace& ws, const RunConfig& cfg, std::size_t threads) {
  const auto seeds = cfg.run_seeds();
  std::vector<Evaluation> evals;
  for (std::uint64_t s : seeds) {
    Workspace w = seeds.size() == 1 ? ws : ws.sub("seed_" + std::to_string(s));
    const RunConfig one = single_seed(cfg, s);
    synth_stage(w, one);
    annotate_stage(w, one);
    train_stage(w, one);
    if (one.experiment.has_method("pecman")) sweep_stage(w, one, threads);
    evals.push_back(eval_stage(w, one));
    if (seeds.size() > 1) w.seal(one);
  }
  if (seeds.size() > 1) {
    std::vector<const Evaluation*> ptrs;
    for (const auto& e : evals) ptrs.push_back(&e);
    ws.write("summary_seeds.csv", [&](std::ostream& o) { write_seed_summary_csv(seeds, ptrs, o); });
    const auto rows = paired_tests(ptrs, cfg.pairing);
    if (!rows.empty()) ws.write("ttest.csv", [&](std::ostream& o) { write_ttest_csv(rows, o); });
  }
  ws.seal(seeds.size() == 1 ? single_seed(cfg, seeds.front()) : cfg);
  return evals;
}

// ---------------------------------------------------------------------------
// report

namespace detail {

inline std::vector<std::vector<std::string>> read_plain_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("report: cannot read " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (fairhai::detail::trim(line).empty()) continue;
    std::vector<std::string> cells;
    for (auto c : fairhai::detail::split_view(fairhai::detail::trim(line), ',')) cells.emplace_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::string render_seed_summary(const fs::path& p) {
  const auto rows = read_plain_csv(p);
  if (rows.empty() || rows.front() != std::vector<std::string>{"seed", "method", "auacc", "auesacc"}) {
    throw SchemaError(p.string() + ": unexpected header");
  }
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 4) throw SchemaError(p.string() + ": row " + std::to_string(r) + " has the wrong width");
    double u = 0.0, e = 0.0;
    if (!fairhai::detail::parse_double(rows[r][2], u) || !fairhai::detail::parse_double(rows[r][3], e)) {
      throw SchemaError(p.string() + ": row " + std::to_string(r) + " is not numeric");
    }
    if (!by.count(rows[r][1])) order.push_back(rows[r][1]);
    by[rows[r][1]].first.push_back(u);
    by[rows[r][1]].second.push_back(e);
  }
  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return fixed(m) + " +/- " + fixed(sd);
  };
  std::vector<std::vector<std::string>> body;
  for (const auto& m : order) {
    body.push_back({m, std::to_string(by[m].first.size()), mean_sd(by[m].first), mean_sd(by[m].second)});
  }
  return render_table({"method", "seeds", "AUACC", "AUESACC"}, body);
}

inline std::string render_ttest(const fs::path& p) {
  auto rows = read_plain_csv(p);
  if (rows.empty()) throw SchemaError(p.string() + ": empty file");
  std::vector<std::string> header = rows.front();
  rows.erase(rows.begin());
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != "mean_diff" && header[c] != "p_value") continue;
    for (auto& r : rows) {
      double v = 0.0;
      if (c >= r.size() || !fairhai::detail::parse_double(r[c], v)) continue;
      char buf[32];
      std::snprintf(buf, sizeof buf, header[c] == "p_value" ? "%.3g" : "%.4f", v);
      r[c] = buf;
    }
  }
  return render_table(header, rows);
}

}  // namespace detail

/// Aligned text tables for the summaries found in `dir`.
inline std::string report(const fs::path& dir) {
  std::string out;
  if (fs::exists(dir / "summary.csv")) {
    std::ifstream in(dir / "summary.csv");
    out += render_summary(read_summary_csv(in, (dir / "summary.csv").string()));
  }
  if (fs::exists(dir / "summary_seeds.csv")) {
    if (!out.empty()) out += "\n";
    out += detail::render_seed_summary(dir / "summary_seeds.csv");
  }
  if (out.empty()) throw ValidationError("report: no summary.csv or summary_seeds.csv in " + dir.string());
  if (fs::exists(dir / "ttest.csv")) out += "\n" + detail::render_ttest(dir / "ttest.csv");
  return out;
}

}  // namespace fairhai::cli

#endif  // FAIRHAI_TOOLS_COMMANDS_HPP_
