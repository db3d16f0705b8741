// Copyright 2026 The Keymask Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "keymask/errors.hpp"
#include "keymask/pipeline.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Pipeline config JSON");
    app->add_option("--set", overrides, "Override a config field, e.g. train.steps=500");
    app->add_option("--seed", seed, "Random seed (overrides the config)");
  }

  keymask::PipelineConfig load() const {
    std::vector<std::string> all = overrides;
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    return keymask::load_pipeline_config(path, all);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keymask pseudo-labelling pipeline"};
  app.require_subcommand(1);

  Common synth_opts, discover_opts, train_opts, eval_opts;

  std::string synth_out;
  int num_videos = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_opts.attach(synth);
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--videos", num_videos, "Number of videos (overrides the config)");

  std::string discover_data, discover_out, discover_report;
  auto* discover = app.add_subcommand("discover", "Discover keymasks from track files");
  discover_opts.attach(discover);
  discover->add_option("--data", discover_data, "Dataset directory")->required();
  discover->add_option("--out", discover_out, "Sparse labelset output")->required();
  discover->add_option("--report", discover_report, "Discovery report output");

  std::string train_labels, train_data, train_out;
  int stage = 1;
  auto* train = app.add_subcommand("train", "Train the propagator and densify");
  train_opts.attach(train);
  train->add_option("--stage", stage, "1 (sparse anchors) or 2 (dense anchors)")
      ->check(CLI::IsMember({1, 2}));
  train->add_option("--labels", train_labels, "Anchoring labelset")->required();
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();

  std::string eval_pred, eval_gt, eval_data, eval_out;
  std::vector<std::string> metrics{"ap", "jf"};
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  eval_opts.attach(eval);
  eval->add_option("--pred", eval_pred, "Prediction labelset or model file")->required();
  eval->add_option("--gt", eval_gt, "Ground-truth labelset")->required();
  eval->add_option("--data", eval_data, "Dataset directory (needed for a model)");
  eval->add_option("--out", eval_out, "Metrics JSON output");
  eval->add_option("--metrics", metrics, "Metrics to compute: ap, jf")
      ->check(CLI::IsMember({"ap", "jf"}))
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*synth) {
      if (num_videos > 0) synth_opts.overrides.push_back("synth.num_videos=" + std::to_string(num_videos));
      keymask::cmd_synth(synth_opts.load(), synth_out);
    } else if (*discover) {
      const auto out = keymask::cmd_discover(discover_opts.load(), discover_data, discover_out,
                                             discover_report);
      std::cerr << "discovered " << out.report["totals"]["num_instances"] << " instances in "
                << out.report["totals"]["num_videos"] << " videos, "
                << out.report["discarded"].size() << " discarded\n";
    } else if (*train) {
      const auto out = keymask::cmd_train(train_opts.load(), stage, train_labels, train_data, train_out);
      if (!out.result.log.empty()) {
        const auto& last = out.result.log.back();
        std::cerr << "stage " << stage << ": " << out.result.log.size()
                  << " steps, final loss " << last.total << "\n";
      }
    } else if (*eval) {
      keymask::EvalOptions options;
      options.ap = std::find(metrics.begin(), metrics.end(), "ap") != metrics.end();
      options.jf = std::find(metrics.begin(), metrics.end(), "jf") != metrics.end();
      const auto result = keymask::cmd_eval(eval_opts.load(), eval_pred, eval_gt, eval_data,
                                            options, eval_out);
      std::cout << result.dump(1) << "\n";
    }
  } catch (const keymask::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const keymask::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
