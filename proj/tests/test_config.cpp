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


#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sknet/config.hpp"

namespace sknet {
namespace {

RunConfig parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  parse_config(in, cfg);
  return cfg;
}

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(RunConfig{}.validate()); }

TEST(Config, SectionsListsEnumsAndComments) {
  const RunConfig cfg = parse(
      "# header comment\n"
      "[model]\n"
      "n_skeypoints = 64   # trailing\n"
      "point_mlp_widths = [8, 16]\n"
      "task = segmentation\n"
      "local_sampling = \"ball\"\n"
      "[train]\n"
      "learning_rate = 2.5e-4\n"
      "augment_rotation_z = true\n"
      "[run]\n"
      "output_dir = \"runs/a#b\"\n");
  EXPECT_EQ(cfg.model.n_skeypoints, 64u);
  EXPECT_EQ(cfg.model.point_mlp_widths, (std::vector<std::size_t>{8, 16}));
  EXPECT_EQ(cfg.model.task, Task::segmentation);
  EXPECT_EQ(cfg.model.local_sampling, LocalSampling::ball);
  EXPECT_EQ(cfg.train.learning_rate, 2.5e-4);
  EXPECT_TRUE(cfg.train.augment_rotation_z);
  EXPECT_EQ(cfg.output_dir, "runs/a#b");
}

TEST(Config, EmptyListAllowedWhereOptional) {
  const RunConfig cfg = parse("[model]\nskeypoint_fc_widths = []\n");
  EXPECT_TRUE(cfg.model.skeypoint_fc_widths.empty());
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ErrorsCarryLineNumber) {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("[model]\n\nbogus = 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("[model]\nn_points = -4\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[model]\ntask = regression\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[model\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("[train]\nepochs\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[train]\naugment_rotation_z = maybe\n").find("line 2"), std::string::npos);
}

TEST(Config, OverridesUseDottedKeys) {
  RunConfig cfg;
  apply_override(cfg, "train.epochs=3");
  apply_override(cfg, " model.pd_features = detail ");
  EXPECT_EQ(cfg.train.epochs, 3u);
  EXPECT_EQ(cfg.model.pd_features, PdFeatures::detail);
  EXPECT_THROW(apply_override(cfg, "train.epochs"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.nope=1"), ConfigError);
}

TEST(Config, TextRoundTripIsExact) {
  RunConfig cfg;
  cfg.model.n_skeypoints = 33;
  cfg.model.keypoint_source = KeypointSource::random;
  cfg.loss.delta = 0.1 + 0.2;
  cfg.train.seed = 18446744073709551615ULL;
  cfg.data.source = DataSource::manifest;
  cfg.data.train_manifest = "a b/train.txt";
  cfg.output_dir = "out dir";
  const std::string text = config_to_text(cfg);
  const RunConfig back = parse(text);
  EXPECT_EQ(config_to_text(back), text);
  EXPECT_EQ(back.loss.delta, cfg.loss.delta);
  EXPECT_EQ(back.train.seed, cfg.train.seed);
  EXPECT_EQ(back.data.train_manifest, cfg.data.train_manifest);
}

TEST(Config, ModelHashTracksModelSectionOnly) {
  RunConfig a, b;
  b.train.epochs = 7;
  b.loss.delta = 0.2;
  EXPECT_EQ(model_config_hash(a.model), model_config_hash(b.model));
  b.model.pattern_k = 8;
  EXPECT_NE(model_config_hash(a.model), model_config_hash(b.model));
  EXPECT_EQ(model_config_hash(a.model).size(), 16u);
  EXPECT_EQ(model_config_text(model_config_from_text(model_config_text(b.model))), model_config_text(b.model));
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, ValidationRejectsInconsistentShapes) {
  auto invalid = [](auto mutate) {
    RunConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), ConfigError);
  };
  invalid([](RunConfig& c) { c.model.pattern_k = c.model.n_skeypoints + 1; });
  invalid([](RunConfig& c) { c.model.detail_k = c.model.n_points + 1; });
  invalid([](RunConfig& c) { c.model.point_mlp_widths.clear(); });
  invalid([](RunConfig& c) { c.model.head_dropout = 1.0; });
  invalid([](RunConfig& c) {
    c.model.task = Task::segmentation;
    c.model.n_skeypoints = 2;
    c.model.pattern_k = 2;
  });
  invalid([](RunConfig& c) { c.loss.delta = 0.0; });
  invalid([](RunConfig& c) { c.train.decay_epochs = 0; });
  invalid([](RunConfig& c) { c.train.decay_rate = 1.5; });
  invalid([](RunConfig& c) { c.data.source = DataSource::manifest; });
}

TEST(Config, ThresholdUnits) {
  LossConfig loss;
  EXPECT_EQ(loss.delta_sq(), 0.05);
  loss.thresholds_are_squared = false;
  EXPECT_DOUBLE_EQ(loss.delta_sq(), 0.0025);
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = std::filesystem::path(SKNET_SOURCE_DIR) / "configs";
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".toml") continue;
    ++seen;
    EXPECT_NO_THROW(load_config(entry.path()).validate()) << entry.path();
  }
  EXPECT_GE(seen, 2u);
  EXPECT_THROW(load_config(dir / "missing.toml"), ConfigError);
}

}  // namespace
}  // namespace sknet
