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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

int fail(int code, const std::string& msg) {
  std::cerr << "fairhai: error: " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fairhai;
  CLI::App app{"Fairness-aware human-AI collaboration experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global seed; overrides run.seed and run.seeds");
    sub->add_option("--out", out_dir, "output directory")->required();
  };
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"run", "synthesize, annotate, train, sweep and evaluate"},
      {"synth", "write the dataset snapshot"},
      {"annotate", "add simulated clinician labels"},
      {"train", "split, then train Step 0, Step 1 and the ERM baseline"},
      {"sweep", "train Step 2 at every epsilon"},
      {"eval", "curves, summaries, deferral tables and decision traces"},
  };
  for (const auto& s : subs) add_common(app.add_subcommand(s.name, s.help));
  auto* rep = app.add_subcommand("report", "print the summary of an output directory");
  rep->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "report") {
    try {
      std::cout << cli::report(out_dir);
      return kOk;
    } catch (const std::invalid_argument& e) {
      return fail(kValidation, e.what());
    } catch (const SchemaError& e) {
      return fail(kValidation, e.what());
    } catch (const std::exception& e) {
      return fail(kRuntime, e.what());
    }
  }

  RunConfig cfg;
  try {
    if (config_path.empty()) {
      std::istringstream none;
      cfg = parse_run_config(none, "<defaults>", seed);
    } else {
      cfg = load_run_config(config_path, seed);
    }
  } catch (const std::exception& e) {
    return fail(kValidation, e.what());
  }

  cli::Workspace ws{std::filesystem::path(out_dir)};
  try {
    const std::size_t threads = thread_budget();
    const RunConfig one = cli::single_seed(cfg, cfg.experiment.seed);
    if (cmd == "run") {
      cli::run_stage(ws, cfg, threads);
    } else {
      if (cmd == "synth") cli::synth_stage(ws, one);
      if (cmd == "annotate") cli::annotate_stage(ws, one);
      if (cmd == "train") cli::train_stage(ws, one);
      if (cmd == "sweep") cli::sweep_stage(ws, one, threads);
      if (cmd == "eval") cli::eval_stage(ws, one);
      ws.seal(one);
    }
    std::cout << "fairhai " << cmd << ": wrote " << ws.root().string() << "\n";
    return kOk;
  } catch (const std::invalid_argument& e) {
    ws.rollback();
    return fail(kValidation, e.what());
  } catch (const SchemaError& e) {
    ws.rollback();
    return fail(kValidation, e.what());
  } catch (const std::exception& e) {
    ws.rollback();
    return fail(kRuntime, e.what());
  }
}
