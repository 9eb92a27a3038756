// Copyright 2026 The SK-Net Authors. All Rights Reserved.
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


#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sknet/ablation.hpp"
#include "sknet/checkpoint.hpp"
#include "sknet/trainer.hpp"

namespace sknet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

inline constexpr data::Rgb kInputColor{128, 128, 128};
inline constexpr data::Rgb kSkeypointColor{255, 0, 0};
inline constexpr data::Rgb kNormalizedColor{255, 165, 0};

namespace fs = std::filesystem;

/// Config file (or defaults), then `--set` overrides, then SKNET_SEED.
inline RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    require<ConfigError>(fs::exists(path), "config file not found: ", path);
    cfg = load_config(path);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  if (const char* env = std::getenv("SKNET_SEED"); env && *env)
    set_config_value(cfg, "train.seed", env);
  cfg.validate();
  return cfg;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write ", path.string());
  out << text;
  require(static_cast<bool>(out), "failed writing ", path.string());
}

inline std::string metric_line(const std::string& metric, double value, const std::string& perturbation,
                               std::uint64_t seed) {
  nlohmann::json j = {{"metric", metric}, {"value", value}, {"perturbation", perturbation}, {"seed", seed}};
  return j.dump();
}

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
};

inline int cmd_train(const TrainArgs& args, Streams io) {
  const RunConfig cfg = resolve_config(args.config, args.overrides);
  const fs::path dir = cfg.output_dir;
  write_text(dir / "config.toml", config_to_text(cfg));
  const DatasetPair ds = load_datasets(cfg);
  io.err << "train: " << ds.train.size() << " train / " << ds.test.size() << " test clouds, seed "
         << cfg.train.seed << '\n';
  SkNet model(cfg.model, cfg.train.seed);
  const TrainResult result = train(model, cfg, ds.train, ds.test, [&](const EpochRow& r) {
    io.err << "epoch " << r.epoch << " loss " << r.total << " (task " << r.task << ", sep " << r.sep
           << ", close " << r.close << ") train_acc " << r.train_acc << " test_acc " << r.test_acc;
    if (cfg.model.task == Task::segmentation) io.err << " test_miou " << r.test_miou;
    io.err << " [" << r.wall_time << "s]\n";
  });
  std::ostringstream csv;
  result.report.write_csv(csv);
  write_text(dir / "report.csv", csv.str());
  save_checkpoint(dir / "checkpoint.json", result.best);
  const std::string metric = cfg.model.task == Task::classification ? "best_test_accuracy" : "best_test_miou";
  io.out << metric_line(metric, result.report.best_metric, "none", cfg.train.seed) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string dataset;
  std::vector<std::string> overrides;
  std::optional<double> dropout;
  std::optional<double> skeypoint_noise;
  std::vector<double> sweep_dropout;
  std::vector<double> sweep_noise;
  std::string csv;
  std::string output_dir;
};

inline int cmd_eval(const EvalArgs& args, Streams io) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  RunConfig cfg = resolve_config(args.config, args.overrides);
  cfg.model = ck.config;
  if (!args.dataset.empty()) {
    cfg.data.source = DataSource::manifest;
    cfg.data.test_manifest = args.dataset;
    if (cfg.data.train_manifest.empty()) cfg.data.train_manifest = args.dataset;
  }
  cfg.validate();
  const fs::path dir = args.output_dir.empty() ? fs::path(args.checkpoint).parent_path() : fs::path(args.output_dir);
  write_text(dir / "eval_config.toml", config_to_text(cfg));

  std::vector<Perturbation> plan;
  if (args.dropout) plan.push_back(Perturbation::dropout(*args.dropout));
  if (args.skeypoint_noise) plan.push_back(Perturbation::skeypoint_noise(*args.skeypoint_noise));
  for (double r : args.sweep_dropout) plan.push_back(Perturbation::dropout(r));
  for (double s : args.sweep_noise) plan.push_back(Perturbation::skeypoint_noise(s));
  if (plan.empty()) plan.push_back(Perturbation::none());

  const data::Dataset test = load_split(cfg, "test");
  auto model = model_from_checkpoint(ck);
  const std::uint64_t seed = cfg.train.seed;
  std::ostringstream csv;
  csv << "perturbation,amount,n_points,accuracy,miou,seed\n";
  for (const auto& p : plan) {
    const EvalMetrics m = evaluate(*model, test, p, seed, cfg.loss, cfg.train.eval_batch_size);
    io.out << metric_line("accuracy", m.accuracy, p.label(), seed) << '\n';
    if (cfg.model.task == Task::segmentation) io.out << metric_line("miou", m.miou, p.label(), seed) << '\n';
    std::size_t n = cfg.model.n_points;
    if (p.kind == PerturbationKind::dropout) n -= static_cast<std::size_t>(std::llround(p.amount * static_cast<double>(n)));
    const char* kind = p.kind == PerturbationKind::dropout ? "dropout"
                       : p.kind == PerturbationKind::skeypoint_noise ? "skeypoint_noise" : "none";
    csv << kind << ',' << data::format_double(p.amount) << ',' << n << ',' << data::format_double(m.accuracy)
        << ',' << data::format_double(m.miou) << ',' << seed << '\n';
  }
  if (!args.csv.empty()) write_text(args.csv, csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// export-skeypoints
// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string format = "auto";
  bool no_normalize = false;
};

inline int cmd_export(const ExportArgs& args, Streams io) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  RunConfig cfg;
  cfg.model = ck.config;
  cfg.data.normalize = !args.no_normalize;
  std::ostringstream resolved;
  resolved << "# export-skeypoints checkpoint=" << args.checkpoint << " input=" << args.input << '\n'
           << config_to_text(cfg);
  write_text(args.output + ".config.toml", resolved.str());

  data::PointCloud pc = data::load_point_file(args.input, data::parse_format(args.format));
  if (cfg.data.normalize) pc = data::normalize_unit_cube(std::move(pc));
  auto model = model_from_checkpoint(ck);
  const data::Batch batch = data::make_batch(std::span<const data::PointCloud>(&pc, 1), ck.config.with_normals);
  NoGradGuard no_grad;
  const ModelOutput out = model->forward(batch.coords, Mode::eval);
  const SkeypointSet& set = out.sets[0];

  data::PointCloud scene;
  scene.coords = pc.coords;
  scene.coords.insert(scene.coords.end(), set.skeypoints.begin(), set.skeypoints.end());
  scene.coords.insert(scene.coords.end(), set.normalized.begin(), set.normalized.end());
  std::vector<data::Rgb> colors(pc.size(), kInputColor);
  colors.insert(colors.end(), set.skeypoints.size() / 3, kSkeypointColor);
  colors.insert(colors.end(), set.normalized.size() / 3, kNormalizedColor);
  if (fs::path(args.output).has_parent_path()) fs::create_directories(fs::path(args.output).parent_path());
  data::write_ply(args.output, scene, &colors);
  io.err << "wrote " << scene.size() << " vertices to " << args.output << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string mode;
  std::size_t seeds = 3;
};

inline int cmd_ablate(const AblateArgs& args, Streams io) {
  const RunConfig cfg = resolve_config(args.config, args.overrides);
  ablation_grid(cfg, args.mode);  // rejects bad modes before any output
  const fs::path dir = fs::path(cfg.output_dir) / ("ablate-" + args.mode);
  write_text(dir / "config.toml", config_to_text(cfg));
  const fs::path csv_path = dir / "ablation.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  require(static_cast<bool>(csv), "cannot write ", csv_path.string());
  write_ablation_header(csv);
  run_ablation(cfg, args.mode, args.seeds, [&](const AblationRow& r) {
    write_ablation_row(csv, r);
    csv.flush();
    io.err << args.mode << ' ' << r.variant << " seed " << r.seed << ": final_test_acc " << r.final_test_acc
           << " best " << r.best_metric << '\n';
    io.out << metric_line(r.variant + ".final_test_acc", r.final_test_acc, "none", r.seed) << '\n';
  });
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

struct GenSynthArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string format = "ply";
};

inline int cmd_gen_synth(const GenSynthArgs& args, Streams io) {
  RunConfig cfg = resolve_config(args.config, args.overrides);
  cfg.data.source = DataSource::synthetic;
  require<ConfigError>(args.format == "ply" || args.format == "csv", "--format must be ply or csv");
  const fs::path dir = args.output_dir;
  write_text(dir / "gen_config.toml", config_to_text(cfg, "data"));
  for (const std::string split : {"train", "test"}) {
    const data::DatasetManifest recipes = resolve_manifest(cfg.data, split);
    data::DatasetManifest files;
    files.split = split;
    files.class_names = recipes.class_names;
    fs::create_directories(dir / split);
    for (std::size_t i = 0; i < recipes.entries.size(); ++i) {
      const auto& e = recipes.entries[i];
      data::PointCloud pc = data::load_entry(recipes, e);
      const std::string name = concat_message(split, "/", recipes.class_names[static_cast<std::size_t>(e.label)],
                                              "_", i, args.format == "ply" ? ".ply" : ".csv");
      if (args.format == "ply") {
        data::write_ply(dir / name, pc);
      } else {
        std::ofstream out(dir / name, std::ios::binary);
        data::write_xyz_csv(out, pc);
      }
      files.entries.push_back({name, e.label});
    }
    std::ofstream manifest(dir / (split + ".manifest"), std::ios::binary);
    data::write_manifest(manifest, files);
    io.err << "wrote " << files.entries.size() << " " << split << " clouds\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parses `argv` and runs one verb. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"SK-Net point cloud classification and segmentation"};
  app.require_subcommand(1);
  Streams io{out, err};

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  train_cmd->add_option("--config", train_args.config, "Run config file")->required();
  train_cmd->add_option("--set", train_args.overrides, "Override, key=value (repeatable)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, optionally under perturbations");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", eval_args.config, "Run config supplying the dataset");
  eval_cmd->add_option("--dataset", eval_args.dataset, "Test manifest file");
  eval_cmd->add_option("--set", eval_args.overrides, "Override, key=value (repeatable)");
  eval_cmd->add_option("--dropout", eval_args.dropout, "Fraction of points removed");
  eval_cmd->add_option("--skeypoint-noise", eval_args.skeypoint_noise, "Gaussian sigma added to Skeypoints");
  eval_cmd->add_option("--sweep-dropout", eval_args.sweep_dropout, "Comma-separated dropout ratios")->delimiter(',');
  eval_cmd->add_option("--sweep-noise", eval_args.sweep_noise, "Comma-separated noise sigmas")->delimiter(',');
  eval_cmd->add_option("--csv", eval_args.csv, "Write one CSV row per evaluation");
  eval_cmd->add_option("--output-dir", eval_args.output_dir, "Where the resolved config is written");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export-skeypoints", "Write a cloud with its Skeypoints as colored PLY");
  export_cmd->add_option("--checkpoint", export_args.checkpoint, "Checkpoint file")->required();
  export_cmd->add_option("--input", export_args.input, "Point cloud file")->required();
  export_cmd->add_option("--output", export_args.output, "Output PLY path")->required();
  export_cmd->add_option("--format", export_args.format, "Input format: auto, ply, off, xyz-csv");
  export_cmd->add_flag("--no-normalize", export_args.no_normalize, "Skip unit-cube normalization");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run a matched-seed ablation grid");
  ablate_cmd->add_option("--config", ablate_args.config, "Base run config");
  ablate_cmd->add_option("--set", ablate_args.overrides, "Override, key=value (repeatable)");
  ablate_cmd->add_option("--mode", ablate_args.mode,
                         "pd-features, losses, sampling, keypoint-count, baselines or pattern-k")
      ->required();
  ablate_cmd->add_option("--seeds", ablate_args.seeds, "Number of consecutive seeds");

  GenSynthArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write the synthetic benchmark as files plus manifests");
  gen_cmd->add_option("--config", gen_args.config, "Run config supplying the data section");
  gen_cmd->add_option("--set", gen_args.overrides, "Override, key=value (repeatable)");
  gen_cmd->add_option("--output-dir", gen_args.output_dir, "Destination directory")->required();
  gen_cmd->add_option("--format", gen_args.format, "ply or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, io);
    if (*eval_cmd) return cmd_eval(eval_args, io);
    if (*export_cmd) return cmd_export(export_args, io);
    if (*ablate_cmd) return cmd_ablate(ablate_args, io);
    if (*gen_cmd) return cmd_gen_synth(gen_args, io);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sknet::cli
