/* Copyright 2026 The PFNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// pfnet: data generation, training, evaluation, gradient checking, ablation
// sweeps and point dumps. Exit codes: 0 success, 1 usage/config error,
// 2 numeric failure, 3 I/O failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pfnet/commands.hpp"
#include "pfnet/config.hpp"
#include "pfnet/errors.hpp"

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "Sectioned key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Run seed (data, init, training)");
  sub->allow_extras();
  sub->footer("Any config key can be overridden as --section.key=value, e.g. --train.epochs=2.");
}

/// Defaults, then `base_file` (a run's saved config), then --config, then
/// --seed, then dot-path overrides.
pfnet::RunConfig build_config(const CLI::App* sub, const Common& c, const fs::path& base_file = {}) {
  pfnet::RunConfig cfg;
  if (!base_file.empty() && fs::exists(base_file)) pfnet::apply_config_file(cfg, base_file);
  if (!c.config_file.empty()) pfnet::apply_config_file(cfg, c.config_file);
  if (c.seed) cfg.seed = *c.seed;
  for (const std::string& arg : sub->remaining()) {
    const auto eq = arg.find('=');
    if (arg.rfind("--", 0) != 0 || eq == std::string::npos) {
      throw pfnet::ConfigError("unexpected argument '" + arg + "' (overrides take the form --key=value)");
    }
    pfnet::apply_override(cfg, arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PointFlow segmentation toolkit"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, grad_c, ablate_c, points_c;
  std::string gen_out, train_data, train_out, eval_ckpt, eval_data, eval_out, eval_split = "val";
  std::string grad_scope = "all", ablate_axis, ablate_data, ablate_out;
  std::string points_ckpt, points_data, points_out;
  std::size_t points_sample = 0, points_window = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic scene dataset");
  add_common(gen, gen_c);
  gen->add_option("out_dir", gen_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train on the train split of a gen-data directory");
  add_common(train, train_c);
  train->add_option("data_dir", train_data, "gen-data output directory")->required();
  train->add_option("out_dir", train_out, "Run directory")->required();

  auto* eval = app.add_subcommand("eval", "Sliding-window evaluation of a checkpoint");
  add_common(eval, eval_c);
  eval->add_option("checkpoint", eval_ckpt, "Checkpoint stem, e.g. run/model")->required();
  eval->add_option("data_dir", eval_data, "gen-data output directory")->required();
  eval->add_option("--out", eval_out, "Report directory (default: <checkpoint dir>/eval)");
  eval->add_option("--split", eval_split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  grad->add_option("scope", grad_scope, "'all' or one case name");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate each variant of one design axis");
  add_common(ablate, ablate_c);
  ablate->add_option("axis", ablate_axis, "sampling, direction, edge_mode, gaps or points")->required();
  ablate->add_option("data_dir", ablate_data, "gen-data output directory")->required();
  ablate->add_option("out_dir", ablate_out, "Output directory")->required();

  auto* points = app.add_subcommand("sample-points", "Dump the PFM point sets of one crop");
  add_common(points, points_c);
  points->add_option("checkpoint", points_ckpt, "Checkpoint stem")->required();
  points->add_option("data_dir", points_data, "gen-data output directory")->required();
  points->add_option("out_dir", points_out, "Output directory")->required();
  points->add_option("--sample", points_sample, "Manifest index of the scene");
  points->add_option("--window", points_window, "Sliding-window index within the scene");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      pfnet::cmd_gen_data(build_config(gen, gen_c), gen_out, std::cout);
    } else if (train->parsed()) {
      pfnet::cmd_train(build_config(train, train_c), train_data, train_out, std::cout);
    } else if (eval->parsed()) {
      const fs::path stem(eval_ckpt);
      const fs::path run_dir = stem.has_parent_path() ? stem.parent_path() : fs::path(".");
      const fs::path out = eval_out.empty() ? run_dir / "eval" : fs::path(eval_out);
      pfnet::cmd_eval(build_config(eval, eval_c, run_dir / "run.cfg"), stem, eval_data, out, eval_split, std::cout);
    } else if (grad->parsed()) {
      return pfnet::cmd_gradcheck(grad_scope, std::cout) ? 0 : 2;
    } else if (ablate->parsed()) {
      pfnet::cmd_ablate(build_config(ablate, ablate_c), ablate_axis, ablate_data, ablate_out, std::cout);
    } else if (points->parsed()) {
      const fs::path stem(points_ckpt);
      const fs::path run_dir = stem.has_parent_path() ? stem.parent_path() : fs::path(".");
      pfnet::cmd_sample_points(build_config(points, points_c, run_dir / "run.cfg"), stem, points_data,
                               points_sample, points_window, points_out, std::cout);
    }
  } catch (const pfnet::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const pfnet::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
