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

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sknet/trainer.hpp"

namespace sknet {

/// One cell of an ablation grid: a label and the run configuration it uses.
struct AblationVariant {
  std::string name;
  RunConfig config;
};

inline constexpr std::string_view kAblationModes[] = {"pd-features", "losses",    "sampling",
                                                      "keypoint-count", "baselines", "pattern-k"};

/// Variants of `base` for one ablation mode. Unknown modes throw ConfigError.
inline std::vector<AblationVariant> ablation_grid(const RunConfig& base, std::string_view mode) {
  std::vector<AblationVariant> grid;
  auto add = [&](std::string name, auto&& edit) {
    RunConfig cfg = base;
    edit(cfg);
    grid.push_back({std::move(name), std::move(cfg)});
  };
  if (mode == "pd-features") {
    add("both", [](RunConfig& c) { c.model.pd_features = PdFeatures::both; });
    add("detail-only", [](RunConfig& c) { c.model.pd_features = PdFeatures::detail; });
    add("pattern-only", [](RunConfig& c) { c.model.pd_features = PdFeatures::pattern; });
  } else if (mode == "losses") {
    const double w[4][2] = {{1, 1}, {0, 0}, {1, 0}, {0, 1}};
    const char* names[4] = {"task+sep+close", "task-only", "task+sep", "task+close"};
    for (int i = 0; i < 4; ++i)
      add(names[i], [&](RunConfig& c) {
        c.loss.weight_task = 1.0;
        c.loss.weight_sep = w[i][0];
        c.loss.weight_close = w[i][1];
      });
  } else if (mode == "sampling") {
    add("knn", [](RunConfig& c) { c.model.local_sampling = LocalSampling::knn; });
    for (double r : {0.1, 0.2})
      add(concat_message("ball-r", data::format_double(r)), [r](RunConfig& c) {
        c.model.local_sampling = LocalSampling::ball;
        c.model.ball_radius = r;
      });
  } else if (mode == "keypoint-count") {
    for (std::size_t m : {32, 64, 128, 192, 256})
      add(concat_message("M=", m), [m](RunConfig& c) { c.model.n_skeypoints = m; });
  } else if (mode == "pattern-k") {
    for (std::size_t k : {8, 16, 24, 32})
      add(concat_message("K=", k), [k](RunConfig& c) {
        c.model.n_skeypoints = 128;
        c.model.pattern_k = k;
      });
  } else if (mode == "baselines") {
    add("learned", [](RunConfig& c) { c.model.keypoint_source = KeypointSource::learned; });
    add("fps", [](RunConfig& c) { c.model.keypoint_source = KeypointSource::fps; });
    add("random", [](RunConfig& c) { c.model.keypoint_source = KeypointSource::random; });
  } else {
    raise<ConfigError>("unknown ablation mode '", mode, "'");
  }
  for (auto& v : grid) v.config.validate();
  return grid;
}

struct AblationRow {
  std::string mode;
  std::string variant;
  std::uint64_t seed = 0;
  double final_test_acc = 0.0;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;
  double final_test_miou = 0.0;
  double spread = 0.0;
  double closeness = 0.0;
};

inline void write_ablation_header(std::ostream& out) {
  // som_acc is left empty; externally computed SOM baselines can be merged into it.
  out << "mode,variant,seed,final_test_acc,final_test_miou,best_metric,best_epoch,skeypoint_spread,"
         "skeypoint_closeness,som_acc\n";
}

inline void write_ablation_row(std::ostream& out, const AblationRow& r) {
  out << r.mode << ',' << r.variant << ',' << r.seed << ',' << data::format_double(r.final_test_acc) << ','
      << data::format_double(r.final_test_miou) << ',' << data::format_double(r.best_metric) << ','
      << r.best_epoch << ',' << data::format_double(r.spread) << ',' << data::format_double(r.closeness)
      << ",\n";
}

/// Trains every variant with each of `seeds` consecutive seeds starting at
/// the base config's seed. Variants share datasets and seeds, so runs are
/// matched. Rows are reported as they finish.
inline std::vector<AblationRow> run_ablation(const RunConfig& base, std::string_view mode, std::size_t seeds,
                                             const std::function<void(const AblationRow&)>& on_row = {}) {
  const auto grid = ablation_grid(base, mode);
  const DatasetPair cls_data = load_datasets(base);
  std::vector<AblationRow> rows;
  for (std::size_t s = 0; s < seeds; ++s) {
    for (const auto& v : grid) {
      RunConfig cfg = v.config;
      cfg.train.seed = base.train.seed + s;
      SkNet model(cfg.model, cfg.train.seed);
      const TrainResult result = train(model, cfg, cls_data.train, cls_data.test);
      const EpochRow& last = result.report.rows.back();
      AblationRow row{std::string(mode), v.name,  cfg.train.seed, last.test_acc, result.report.best_metric,
                      result.report.best_epoch, last.test_miou, last.spread, last.closeness};
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return rows;
}

}  // namespace sknet
