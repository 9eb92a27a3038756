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

#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "sknet/ablation.hpp"
#include "sknet/trainer.hpp"

namespace sknet {
namespace {

using testing::Gen;
using testing::tiny_config;

RunConfig small_run(Task task = Task::classification) {
  RunConfig cfg;
  cfg.model = tiny_config(task);
  if (task == Task::segmentation) cfg.model.n_classes = 10;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 8;
  cfg.train.seed = 3;
  cfg.data.synth_train_per_class = 8;  // 32 clouds
  cfg.data.synth_test_per_class = 2;
  cfg.data.synth_points = 48;
  return cfg;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

Tensor scalar_param(double v) { return Tensor::from_data({1}, {v}, true); }

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = scalar_param(0.5);
  Adam adam({{"w", w}}, AdamConfig{});
  w.grad_mut()[0] = 1.0;
  adam.step();
  EXPECT_NEAR(w.data()[0] - 0.5, -0.001, 1e-10);
  EXPECT_EQ(adam.step_count(), 1u);
  EXPECT_NEAR(adam.first_moment(0)[0], 0.1, 1e-15);
  EXPECT_NEAR(adam.second_moment(0)[0], 0.001, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Gen g(1);
  Tensor w = testing::random_tensor(g, {3, 4});
  const auto before = testing::values(w);
  Adam adam({{"w", w}}, AdamConfig{});
  for (int i = 0; i < 5; ++i) {
    w.zero_grad();
    w.grad_mut();
    adam.step();
  }
  EXPECT_EQ(testing::values(w), before);
}

TEST(Adam, ConvergesOnQuadratic) {
  Tensor w = scalar_param(1.0);
  Adam adam({{"w", w}}, AdamConfig{0.01});
  for (int i = 0; i < 1000; ++i) {
    w.zero_grad();
    backward(sum(mul(w, w)));
    adam.step();
  }
  EXPECT_LT(std::abs(w.data()[0]), 1e-3);
}

TEST(Adam, MissingGradientThrowsNamingParameter) {
  Tensor w = scalar_param(1.0);
  Adam adam({{"layer.weight", w}}, AdamConfig{});
  try {
    adam.step();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
  EXPECT_EQ(adam.step_count(), 0u);
}

TEST(LrSchedule, Staircase) {
  EXPECT_EQ(lr_schedule(0.001, 0, 0.7, 20), 0.001);
  EXPECT_EQ(lr_schedule(0.001, 19, 0.7, 20), 0.001);
  EXPECT_DOUBLE_EQ(lr_schedule(0.001, 20, 0.7, 20), 0.0007);
  EXPECT_DOUBLE_EQ(lr_schedule(0.001, 45, 0.7, 20), 0.001 * 0.49);
  double prev = 1.0;
  for (std::size_t s = 0; s < 500; ++s) {
    const double lr = lr_schedule(0.001, s, 0.7, 20);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_schedule(0.001, 1, 0.7, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, InstanceMiou) {
  const std::vector<int> truth = {0, 0, 1, 1};
  EXPECT_EQ(instance_miou(truth, truth, {0, 1}), 1.0);
  const std::vector<int> pred = {0, 1, 1, 1};
  // Part 0: 1/2, part 1: 2/3.
  EXPECT_DOUBLE_EQ(instance_miou(truth, pred, {0, 1}), (0.5 + 2.0 / 3.0) / 2.0);
  // A part absent from both counts as 1.
  EXPECT_DOUBLE_EQ(instance_miou(truth, pred, {0, 1, 2}), (0.5 + 2.0 / 3.0 + 1.0) / 3.0);
  // Without a part table, parts seen in either labelling are used.
  const std::vector<int> wrong = {5, 5, 5, 5};
  EXPECT_EQ(instance_miou(truth, wrong, {}), 0.0);
}

TEST(Metrics, ArgmaxPrefersFirstOnTies) {
  const std::vector<double> row = {0.1, 0.7, 0.7, -1.0};
  EXPECT_EQ(argmax_row(row), 1u);
}

TEST(Metrics, SkeypointStatistics) {
  SkeypointSet set;
  set.skeypoints = {0, 0, 0, 0.5, 0, 0};
  set.normalized = {0, 0, 0, 1.0, 0, 0};
  const std::vector<double> cloud = {0, 0, 0, 1, 0, 0, 0, 1, 0};
  const auto s = skeypoint_stats(set, geometry::PointsView(cloud));
  EXPECT_EQ(s.spread, 0.25);
  EXPECT_DOUBLE_EQ(s.closeness, 0.25);
  EXPECT_TRUE(s.normalized_in_bounds);
  set.normalized[0] = -0.1;
  EXPECT_FALSE(skeypoint_stats(set, geometry::PointsView(cloud)).normalized_in_bounds);
}

TEST(Metrics, PerturbationLabels) {
  EXPECT_EQ(Perturbation::none().label(), "none");
  EXPECT_EQ(Perturbation::dropout(0.25).label(), "dropout=0.25");
  EXPECT_EQ(Perturbation::skeypoint_noise(0.1).label(), "skeypoint_noise=0.1");
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(Train, OneEpochOneRow) {
  const RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  ASSERT_EQ(data.train.size(), 32u);
  SkNet model(cfg.model, cfg.train.seed);
  std::size_t callbacks = 0;
  const auto result = train(model, cfg, data.train, data.test, [&](const EpochRow&) { ++callbacks; });
  ASSERT_EQ(result.report.rows.size(), 1u);
  EXPECT_EQ(callbacks, 1u);
  const auto& row = result.report.rows[0];
  EXPECT_TRUE(std::isfinite(row.total));
  EXPECT_NEAR(row.total, row.task + row.sep + row.close, 1e-12);
  EXPECT_EQ(row.lr, cfg.train.learning_rate);
  EXPECT_EQ(result.best.meta.at("epoch"), 0);
  std::ostringstream csv;
  result.report.write_csv(csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.rfind("epoch,lr,loss_total,loss_task,loss_sep,loss_close,train_acc,test_acc,test_miou,", 0), 0u);
}

TEST(Train, IdenticalSeedsGiveIdenticalReports) {
  RunConfig cfg = small_run();
  cfg.train.epochs = 2;
  cfg.train.augment_rotation_z = true;
  cfg.train.augment_jitter_sigma = 0.01;
  const auto data = load_datasets(cfg);
  SkNet a(cfg.model, cfg.train.seed), b(cfg.model, cfg.train.seed);
  const auto ra = train(a, cfg, data.train, data.test).report;
  const auto rb = train(b, cfg, data.train, data.test).report;
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].total, rb.rows[i].total);
    EXPECT_EQ(ra.rows[i].test_acc, rb.rows[i].test_acc);
    EXPECT_EQ(ra.rows[i].spread, rb.rows[i].spread);
  }
  EXPECT_EQ(testing::values(a.parameters()[0].tensor), testing::values(b.parameters()[0].tensor));
}

TEST(Train, DifferentSeedsDiffer) {
  RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  SkNet a(cfg.model, 1);
  const double la = train(a, cfg, data.train, data.test).report.rows[0].total;
  cfg.train.seed = 4;
  SkNet b(cfg.model, 1);
  EXPECT_NE(la, train(b, cfg, data.train, data.test).report.rows[0].total);
}

TEST(Train, NonFiniteLossAborts) {
  const RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, 1);
  model.head().layer(0).bias().data_mut()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(model, cfg, data.train, data.test);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("task="), std::string::npos);
    EXPECT_NE(msg.find("sep="), std::string::npos);
    EXPECT_NE(msg.find("close="), std::string::npos);
  }
}

TEST(Train, RejectsMismatchedModel) {
  const RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  ModelConfig other = cfg.model;
  other.pattern_k = 2;
  SkNet model(other, 1);
  EXPECT_THROW(train(model, cfg, data.train, data.test), ConfigError);
}

TEST(Train, BaselineKeypointsStillTrainHead) {
  RunConfig cfg = small_run();
  cfg.model.keypoint_source = KeypointSource::fps;
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, 1);
  const auto before = testing::values(model.head().layer(0).weight());
  train(model, cfg, data.train, data.test);
  EXPECT_NE(testing::values(model.head().layer(0).weight()), before);
}

TEST(Train, SegmentationReportsMiou) {
  const RunConfig cfg = small_run(Task::segmentation);
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, 1);
  const auto result = train(model, cfg, data.train, data.test);
  const auto& row = result.report.rows[0];
  EXPECT_GT(row.test_miou, 0.0);
  EXPECT_LE(row.test_miou, 1.0);
  EXPECT_EQ(result.report.best_metric, row.test_miou);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST(Evaluate, MatchesBestReportRow) {
  RunConfig cfg = small_run();
  cfg.train.epochs = 3;
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, cfg.train.seed);
  const auto result = train(model, cfg, data.train, data.test);
  auto best = model_from_checkpoint(result.best);
  const auto m = evaluate(*best, data.test, Perturbation::none(), cfg.train.seed, cfg.loss, cfg.train.eval_batch_size);
  const auto& row = result.report.rows[result.report.best_epoch];
  EXPECT_EQ(m.accuracy, row.test_acc);
  EXPECT_EQ(m.mean_spread, row.spread);
  EXPECT_EQ(m.accuracy, result.report.best_metric);
  EXPECT_EQ(m.count, data.test.size());
  EXPECT_EQ(m.per_cloud.size(), data.test.size());
}

TEST(Evaluate, ZeroNoiseEqualsNoPerturbation) {
  const RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, 1);
  train(model, cfg, data.train, data.test);
  const auto a = evaluate(model, data.test, Perturbation::none(), 5);
  const auto b = evaluate(model, data.test, Perturbation::skeypoint_noise(0.0), 5);
  const auto c = evaluate(model, data.test, Perturbation::dropout(0.0), 5);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.mean_spread, b.mean_spread);
  EXPECT_EQ(a.mean_closeness, c.mean_closeness);
  EXPECT_THROW(evaluate(model, data.test, Perturbation::dropout(1.0), 5), ConfigError);
  EXPECT_THROW(evaluate(model, data.test, Perturbation::skeypoint_noise(-1.0), 5), ConfigError);
}

TEST(Evaluate, PerturbationsAreSeeded) {
  const RunConfig cfg = small_run();
  const auto data = load_datasets(cfg);
  SkNet model(cfg.model, 1);
  train(model, cfg, data.train, data.test);
  const auto a = evaluate(model, data.test, Perturbation::skeypoint_noise(0.3), 9);
  const auto b = evaluate(model, data.test, Perturbation::skeypoint_noise(0.3), 9);
  EXPECT_EQ(a.mean_spread, b.mean_spread);
  const auto c = evaluate(model, data.test, Perturbation::dropout(0.5), 9);
  const auto d = evaluate(model, data.test, Perturbation::dropout(0.5), 9);
  EXPECT_EQ(c.mean_closeness, d.mean_closeness);
}

// ---------------------------------------------------------------------------
// Ablation grids
// ---------------------------------------------------------------------------

TEST(Ablation, GridsCoverModes) {
  RunConfig base;
  EXPECT_EQ(ablation_grid(base, "pd-features").size(), 3u);
  const auto losses = ablation_grid(base, "losses");
  ASSERT_EQ(losses.size(), 4u);
  EXPECT_EQ(losses[1].name, "task-only");
  EXPECT_EQ(losses[1].config.loss.weight_sep, 0.0);
  EXPECT_EQ(losses[1].config.loss.weight_close, 0.0);
  const auto sampling = ablation_grid(base, "sampling");
  EXPECT_EQ(sampling[1].name, "ball-r0.1");
  EXPECT_EQ(sampling[1].config.model.ball_radius, 0.1);
  EXPECT_EQ(ablation_grid(base, "keypoint-count").size(), 5u);
  for (const auto& v : ablation_grid(base, "pattern-k")) EXPECT_EQ(v.config.model.n_skeypoints, 128u);
  EXPECT_EQ(ablation_grid(base, "baselines")[2].config.model.keypoint_source, KeypointSource::random);
  EXPECT_THROW(ablation_grid(base, "bogus"), ConfigError);
  for (auto mode : kAblationModes) EXPECT_NO_THROW(ablation_grid(base, mode));
}

TEST(Ablation, MatchedSeedsAndRows) {
  RunConfig cfg = small_run();
  std::vector<AblationRow> seen;
  const auto rows = run_ablation(cfg, "losses", 2, [&](const AblationRow& r) { seen.push_back(r); });
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(rows[0].seed, 3u);
  EXPECT_EQ(rows[4].seed, 4u);
  std::ostringstream out;
  write_ablation_header(out);
  write_ablation_row(out, rows[0]);
  EXPECT_NE(out.str().find("losses,task+sep+close,3,"), std::string::npos);
}

}  // namespace
}  // namespace sknet
