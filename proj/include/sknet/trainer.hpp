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

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sknet/checkpoint.hpp"
#include "sknet/config.hpp"
#include "sknet/dataio.hpp"
#include "sknet/losses.hpp"
#include "sknet/model.hpp"
#include "sknet/optim.hpp"

namespace sknet {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetPair {
  data::Dataset train;
  data::Dataset test;
};

inline data::DatasetManifest resolve_manifest(const DataConfig& cfg, const std::string& split) {
  if (cfg.source == DataSource::manifest)
    return data::load_manifest(split == "train" ? cfg.train_manifest : cfg.test_manifest);
  data::SyntheticSplitSpec spec;
  spec.per_class = split == "train" ? cfg.synth_train_per_class : cfg.synth_test_per_class;
  spec.n_points = cfg.synth_points;
  spec.noise_sigma = cfg.synth_noise;
  // Train and test draw from disjoint seed streams.
  spec.seed = split == "train" ? cfg.synth_seed : cfg.synth_seed + 1;
  return data::synthetic_manifest(spec, split);
}

inline data::Dataset load_split(const RunConfig& cfg, const std::string& split) {
  data::Dataset ds = data::load_dataset(resolve_manifest(cfg.data, split), cfg.data.normalize);
  if (cfg.model.task == Task::segmentation && cfg.data.source == DataSource::synthetic)
    data::assign_global_parts(ds);
  return ds;
}

inline DatasetPair load_datasets(const RunConfig& cfg) {
  return {load_split(cfg, "train"), load_split(cfg, "test")};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class PerturbationKind { none, dropout, skeypoint_noise };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::none;
  double amount = 0.0;

  static Perturbation none() { return {}; }
  static Perturbation dropout(double ratio) { return {PerturbationKind::dropout, ratio}; }
  static Perturbation skeypoint_noise(double sigma) { return {PerturbationKind::skeypoint_noise, sigma}; }

  std::string label() const {
    switch (kind) {
      case PerturbationKind::dropout: return concat_message("dropout=", data::format_double(amount));
      case PerturbationKind::skeypoint_noise:
        return concat_message("skeypoint_noise=", data::format_double(amount));
      case PerturbationKind::none: break;
    }
    return "none";
  }
};

/// Per-cloud Skeypoint statistics.
struct SkeypointStats {
  double spread = 0.0;           // mean nearest-neighbor squared distance among Skeypoints
  double closeness = 0.0;        // mean distance from a Skeypoint to its nearest input point
  bool normalized_in_bounds = true;
};

inline SkeypointStats skeypoint_stats(const SkeypointSet& set, geometry::PointsView cloud) {
  SkeypointStats s;
  const geometry::PointsView sk(set.skeypoints);
  s.spread = geometry::mean_nearest_neighbor_squared_distance(sk);
  s.closeness = geometry::mean_distance_to_nearest(sk, cloud);
  double lo[3], hi[3];
  for (std::size_t a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -lo[a];
  }
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], cloud[i][a]);
      hi[a] = std::max(hi[a], cloud[i][a]);
    }
  const geometry::PointsView norm(set.normalized);
  // Means of cloud points can round a hair outside the hull.
  const double slack = 1e-12;
  for (std::size_t j = 0; j < norm.size(); ++j)
    for (std::size_t a = 0; a < 3; ++a)
      if (norm[j][a] < lo[a] - slack || norm[j][a] > hi[a] + slack) s.normalized_in_bounds = false;
  return s;
}

struct EvalMetrics {
  double accuracy = 0.0;  // classification accuracy, or per-point accuracy
  double miou = 0.0;      // segmentation only: mean instance IoU
  std::size_t count = 0;
  double mean_spread = 0.0;
  double mean_closeness = 0.0;
  double frac_spread_ok = 0.0;      // clouds with spread >= delta / 2
  double frac_normalized_in_bounds = 0.0;
  std::vector<SkeypointStats> per_cloud;

  /// The metric used for best-checkpoint selection.
  double primary(Task task) const { return task == Task::classification ? accuracy : miou; }
};

inline std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

/// Instance IoU averaged over the parts of the instance's class. A part absent
/// from both prediction and ground truth scores 1. Without a part table the
/// parts present in either labelling are used.
inline double instance_miou(std::span<const int> truth, std::span<const int> pred, const std::vector<int>& parts) {
  std::vector<int> ids = parts;
  if (ids.empty()) {
    std::set<int> seen(truth.begin(), truth.end());
    seen.insert(pred.begin(), pred.end());
    ids.assign(seen.begin(), seen.end());
  }
  if (ids.empty()) return 1.0;
  double total = 0.0;
  for (int p : ids) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == p, q = pred[i] == p;
      inter += t && q;
      uni += t || q;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(ids.size());
}

/// Evaluation-mode metrics over a dataset, optionally under a test-time
/// perturbation. Dropout removes a fraction of every resampled cloud; Skeypoint
/// noise adds N(0, sigma) to the Skeypoints before the PDE module.
inline EvalMetrics evaluate(SkNet& model, const data::Dataset& dataset, const Perturbation& perturbation,
                            std::uint64_t seed, const LossConfig& loss = {}, std::size_t batch_size = 16) {
  const ModelConfig& mc = model.config();
  require<ConfigError>(perturbation.amount >= 0.0, "perturbation amount must be non-negative");
  data::AugmentSpec aug;
  if (perturbation.kind == PerturbationKind::dropout) {
    require<ConfigError>(perturbation.amount < 1.0, "dropout ratio must be < 1");
    aug.dropout_ratio = perturbation.amount;
  }
  ForwardOptions opts;
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  opts.rng = &rng;
  if (perturbation.kind == PerturbationKind::skeypoint_noise) opts.skeypoint_noise = perturbation.amount;

  NoGradGuard no_grad;
  data::BatchIterator it(dataset, batch_size, mc.n_points, false, seed, mc.with_normals, aug);
  EvalMetrics m;
  std::size_t correct = 0, points = 0, spread_ok = 0, in_bounds = 0;
  double miou_sum = 0.0;
  while (auto batch = it.next()) {
    const ModelOutput out = model.forward(batch->coords, Mode::eval, opts);
    const std::size_t b = batch->coords.dim(0);
    const std::size_t n = batch->coords.dim(1);
    const std::size_t c = batch->coords.dim(2);
    const auto logits = out.logits.data();
    const std::size_t classes = mc.n_classes;
    for (std::size_t i = 0; i < b; ++i) {
      if (mc.task == Task::classification) {
        correct += static_cast<int>(argmax_row(logits.subspan(i * classes, classes))) == batch->labels[i];
      } else {
        require<ConfigError>(!batch->point_labels.empty(), "segmentation evaluation needs point labels");
        std::vector<int> pred(n);
        for (std::size_t p = 0; p < n; ++p) {
          pred[p] = static_cast<int>(argmax_row(logits.subspan((i * n + p) * classes, classes)));
          correct += pred[p] == batch->point_labels[i * n + p];
        }
        const std::span<const int> truth(batch->point_labels.data() + i * n, n);
        const auto label = static_cast<std::size_t>(batch->labels[i]);
        static const std::vector<int> kNoParts;
        miou_sum += instance_miou(truth, pred, label < dataset.class_parts.size() ? dataset.class_parts[label] : kNoParts);
      }
      points += mc.task == Task::classification ? 1 : n;
      const geometry::PointsView cloud(batch->coords.data().data() + i * n * c, n, c);
      const SkeypointStats s = skeypoint_stats(out.sets[i], cloud);
      m.mean_spread += s.spread;
      m.mean_closeness += s.closeness;
      spread_ok += s.spread >= loss.delta_sq() / 2.0;
      in_bounds += s.normalized_in_bounds;
      m.per_cloud.push_back(s);
    }
    m.count += b;
  }
  const auto count = static_cast<double>(m.count);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(points);
  m.miou = mc.task == Task::segmentation ? miou_sum / count : 0.0;
  m.mean_spread /= count;
  m.mean_closeness /= count;
  m.frac_spread_ok = static_cast<double>(spread_ok) / count;
  m.frac_normalized_in_bounds = static_cast<double>(in_bounds) / count;
  return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double task = 0.0;
  double sep = 0.0;
  double close = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double test_miou = 0.0;
  double spread = 0.0;
  double closeness = 0.0;
  double wall_time = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  std::size_t best_epoch = 0;
  double best_metric = -1.0;

  void write_csv(std::ostream& out) const {
    out << "epoch,lr,loss_total,loss_task,loss_sep,loss_close,train_acc,test_acc,test_miou,"
           "skeypoint_spread,skeypoint_closeness,wall_time_s\n";
    for (const auto& r : rows) {
      const double vals[] = {r.lr,       r.total,     r.task,      r.sep,     r.close,     r.train_acc,
                             r.test_acc, r.test_miou, r.spread,    r.closeness, r.wall_time};
      out << r.epoch;
      for (double v : vals) out << ',' << data::format_double(v);
      out << '\n';
    }
  }
};

struct TrainResult {
  Checkpoint best;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRow&)>;

/// Mean task loss over rows; segmentation logits are flattened to points.
inline Tensor task_loss(const Tensor& logits, const data::Batch& batch, Task task) {
  if (task == Task::classification) return softmax_cross_entropy(logits, batch.labels);
  require<ConfigError>(!batch.point_labels.empty(), "segmentation training needs point labels");
  const std::size_t rows = logits.dim(0) * logits.dim(1);
  return softmax_cross_entropy(reshape(logits, {rows, logits.dim(2)}), batch.point_labels);
}

/// Adam training with a staircase schedule (stepped per epoch), evaluating on
/// the test split after every epoch and keeping the best checkpoint. All
/// randomness derives from `cfg.train.seed`.
inline TrainResult train(SkNet& model, const RunConfig& cfg, const data::Dataset& train_set,
                         const data::Dataset& test_set, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const TrainConfig& tc = cfg.train;
  const ModelConfig& mc = model.config();
  require<ConfigError>(model_config_hash(mc) == model_config_hash(cfg.model),
                       "train: model was built from a different model config");
  AdamConfig ac{tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps};
  auto params = model.parameters();
  Adam adam(params, ac);
  Rng rng(tc.seed * 0x2545f4914f6cdd1dULL + 17);
  data::AugmentSpec aug;
  aug.rotation_z = tc.augment_rotation_z;
  aug.jitter_sigma = tc.augment_jitter_sigma;
  aug.jitter_clip = tc.augment_jitter_clip;

  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    adam.set_lr(lr_schedule(tc.learning_rate, epoch, tc.decay_rate, tc.decay_epochs));
    data::BatchIterator it(train_set, tc.batch_size, mc.n_points, true, tc.seed + 1000 * (epoch + 1),
                           mc.with_normals, aug);
    EpochRow row;
    row.epoch = epoch;
    row.lr = adam.lr();
    std::size_t batches = 0, correct = 0, seen = 0;
    while (auto batch = it.next()) {
      // Batch norm needs at least two rows for a variance.
      if (batch->coords.dim(0) < 2) continue;
      ForwardOptions opts;
      opts.rng = &rng;
      const ModelOutput out = model.forward(batch->coords, Mode::train, opts);
      const Tensor task = task_loss(out.logits, *batch, mc.task);
      const Tensor sep = separation_loss(out.skeypoints, cfg.loss.delta_sq());
      const Tensor close = close_loss(out.skeypoints, out.captured, cfg.loss.theta_sq());
      const Tensor total = total_loss(task, sep, close, cfg.loss);
      if (!std::isfinite(total.item()))
        raise<DivergenceError>("non-finite loss at epoch ", epoch, " batch ", batches, ": total=", total.item(),
                               " task=", task.item(), " sep=", sep.item(), " close=", close.item());
      model.zero_grad();
      backward(total);
      // Parameters off the loss path (e.g. the Skeypoint FCs of a baseline) get zero gradients.
      for (auto& p : params)
        if (!p.tensor.has_grad()) p.tensor.grad_mut();
      adam.step();

      row.total += total.item();
      row.task += task.item();
      row.sep += sep.item();
      row.close += close.item();
      ++batches;
      const auto logits = out.logits.data();
      const std::size_t classes = mc.n_classes;
      const std::size_t rows = out.logits.numel() / classes;
      const auto& labels = mc.task == Task::classification ? batch->labels : batch->point_labels;
      for (std::size_t r = 0; r < rows; ++r)
        correct += static_cast<int>(argmax_row(logits.subspan(r * classes, classes))) == labels[r];
      seen += rows;
    }
    require<ConfigError>(batches > 0, "train: no usable batches (need batch_size >= 2 and >= 2 clouds)");
    const auto nb = static_cast<double>(batches);
    row.total /= nb;
    row.task /= nb;
    row.sep /= nb;
    row.close /= nb;
    row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);

    const EvalMetrics em = evaluate(model, test_set, Perturbation::none(), tc.seed, cfg.loss, tc.eval_batch_size);
    row.test_acc = em.accuracy;
    row.test_miou = em.miou;
    row.spread = em.mean_spread;
    row.closeness = em.mean_closeness;
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.report.rows.push_back(row);
    const double metric = em.primary(mc.task);
    if (metric > result.report.best_metric) {
      result.report.best_metric = metric;
      result.report.best_epoch = epoch;
      result.best = snapshot(model, {{"epoch", epoch}, {"metric", metric}, {"seed", tc.seed}});
    }
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace sknet
