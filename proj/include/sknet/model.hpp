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

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sknet/config.hpp"
#include "sknet/geometry.hpp"
#include "sknet/layers.hpp"
#include "sknet/ops.hpp"

namespace sknet {

/// Skeypoints of one cloud together with the regions they induce.
struct SkeypointSet {
  std::vector<double> skeypoints;            // M x 3
  std::vector<double> normalized;            // M x 3, mean of each detail region
  geometry::GroupedRegions detail_regions;   // M x H into the input cloud
  geometry::GroupedRegions pattern_regions;  // M x K into `normalized`
};

struct PdeOutput {
  Tensor pd_feature;       // [B, F]
  Tensor per_skeypoint;    // [B, M, F] before the final max over M
  Tensor detail_feature;   // [B, M, Dd], undefined when the branch is off
  Tensor pattern_feature;  // [B, M, Dp], undefined when the branch is off
  Tensor combined;         // [B, M, Dd + Dp]
  Tensor detail_input;     // [B, M, H, 3]
  Tensor captured;         // [B, M, H, 3] raw captured coordinates
  std::vector<SkeypointSet> sets;
};

struct PointFeatures {
  Tensor point_feats;     // [B, N, w] tap used by the segmentation head
  Tensor global_feature;  // [B, G]
};

struct ModelOutput {
  Tensor logits;       // [B, C] or [B, N, C]
  Tensor skeypoints;   // [B, M, 3] as fed to the PDE module
  Tensor captured;     // [B, M, H, 3]
  Tensor global_feature;
  Tensor pd_feature;
  Tensor per_skeypoint_features;
  Tensor point_features;
  std::vector<SkeypointSet> sets;
};

struct ForwardOptions {
  /// Standard deviation of Gaussian noise added to the Skeypoints before the
  /// PDE module.
  double skeypoint_noise = 0.0;
  /// Drives dropout, baseline keypoint selection/jitter and Skeypoint noise.
  Rng* rng = nullptr;
};

/// Three nearest normalized Skeypoints of every input point and their
/// normalized inverse-squared-distance weights, [B, N, 3] each.
struct Interpolation {
  std::vector<std::size_t> index;
  std::vector<double> weights;
};

inline constexpr std::size_t kInterpNeighbors = 3;
inline constexpr double kInterpEps = 1e-8;

inline void interpolation_weights(geometry::PointsView points, geometry::PointsView anchors,
                                  Interpolation& out) {
  require<ConfigError>(anchors.size() >= kInterpNeighbors, "interpolation needs at least ",
                       kInterpNeighbors, " Skeypoints, got ", anchors.size());
  const auto regions = geometry::knn_query(anchors, points, kInterpNeighbors);
  for (std::size_t n = 0; n < points.size(); ++n) {
    double w[kInterpNeighbors];
    double total = 0.0;
    for (std::size_t j = 0; j < kInterpNeighbors; ++j) {
      const std::size_t a = regions.at(n, j);
      w[j] = 1.0 / (geometry::squared_distance(points[n], anchors[a]) + kInterpEps);
      total += w[j];
    }
    for (std::size_t j = 0; j < kInterpNeighbors; ++j) {
      out.index.push_back(regions.at(n, j));
      out.weights.push_back(w[j] / total);
    }
  }
}

/// The SK-Net graph: shared per-point MLP with max-pooled global feature,
/// Skeypoint regression, the pattern-and-detail module and a task head.
class SkNet {
 public:
  SkNet(ModelConfig config, std::uint64_t seed) : cfg_(std::move(config)) {
    cfg_.validate();
    Rng rng(seed);
    point_mlp_ = DenseStack(cfg_.input_channels(), DenseStack::uniform(cfg_.point_mlp_widths, Activation::prelu), rng);
    const auto& pw = cfg_.point_mlp_widths;
    tap_index_ = 0;
    while (tap_index_ + 1 < pw.size() && pw[tap_index_ + 1] <= 64) ++tap_index_;
    auto sk_specs = DenseStack::uniform(cfg_.skeypoint_fc_widths, Activation::prelu);
    sk_specs.push_back({3 * cfg_.n_skeypoints, false, Activation::prelu});
    skeypoint_fc_ = DenseStack(global_width(), sk_specs, rng);
    if (cfg_.pd_features != PdFeatures::pattern)
      detail_mlp_ = DenseStack(3, DenseStack::uniform(cfg_.detail_mlp_widths, Activation::relu), rng);
    if (cfg_.pd_features != PdFeatures::detail)
      pattern_mlp_ = DenseStack(3, DenseStack::uniform(cfg_.pattern_mlp_widths, Activation::relu), rng);
    std::size_t combined = 0;
    if (!detail_mlp_.empty()) combined += detail_mlp_.out_width();
    if (!pattern_mlp_.empty()) combined += pattern_mlp_.out_width();
    pd_fc_ = DenseStack(combined, DenseStack::uniform(cfg_.pd_fc_widths, Activation::relu), rng);
    auto head_specs = DenseStack::uniform(cfg_.head_widths, Activation::relu);
    head_specs.push_back({cfg_.n_classes, false, Activation::none});
    std::size_t head_in = global_width() + pd_width();
    if (cfg_.task == Task::segmentation) head_in += pw[tap_index_] + pd_width();
    head_ = DenseStack(head_in, head_specs, rng, cfg_.head_dropout);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t global_width() const { return cfg_.point_mlp_widths.back(); }
  std::size_t pd_width() const { return cfg_.pd_fc_widths.back(); }

  /// Shared per-point MLP (PReLU, batch norm) and max over the point axis.
  PointFeatures point_feature_extract(const Tensor& coords, Mode mode) {
    require<DimensionError>(coords.rank() == 3 && coords.dim(2) == cfg_.input_channels(),
                            "point_feature_extract: expected [B,N,", cfg_.input_channels(), "], got ",
                            shape_str(coords.shape()));
    std::vector<Tensor> taps;
    const Tensor feats = point_mlp_.forward(coords, mode, nullptr, &taps);
    return {taps[tap_index_], max_pool_axis(feats, 1).values};
  }

  /// Three fully connected layers regress 3*M values, reshaped to [B, M, 3].
  Tensor infer_skeypoints(const Tensor& global_feature, Mode mode) {
    const Tensor flat = skeypoint_fc_.forward(global_feature, mode);
    return reshape(flat, {global_feature.dim(0), cfg_.n_skeypoints, 3});
  }

  /// Unlearned keypoints for the baseline comparisons: FPS or a uniform
  /// random subset of the input, optionally jittered. Carries no gradient.
  Tensor baseline_keypoints(const Tensor& coords, Rng* rng) const {
    const std::size_t batch = coords.dim(0);
    const std::size_t n = coords.dim(1);
    const std::size_t c = coords.dim(2);
    const std::size_t m = cfg_.n_skeypoints;
    std::vector<double> out;
    out.reserve(batch * m * 3);
    for (std::size_t b = 0; b < batch; ++b) {
      geometry::PointsView pts(coords.data().data() + b * n * c, n, c);
      std::vector<std::size_t> idx;
      if (cfg_.keypoint_source == KeypointSource::fps) {
        idx = geometry::farthest_point_sampling(pts, m, 0);
      } else {
        require(rng != nullptr, "random keypoints need an rng");
        idx = geometry::random_dropout_sample(pts, m, *rng);
      }
      for (std::size_t i : idx) out.insert(out.end(), pts[i], pts[i] + 3);
    }
    if (rng && cfg_.keypoint_jitter > 0.0) {
      std::normal_distribution<double> gauss(0.0, cfg_.keypoint_jitter);
      for (double& v : out) v += gauss(*rng);
    }
    return Tensor::from_data({batch, m, 3}, std::move(out));
  }

  /// Pattern-and-detail extraction.
  ///
  /// Detail branch: the H input points nearest each Skeypoint, recentered on
  /// the Skeypoint, through a shared MLP and a max over H. Pattern branch:
  /// normalized Skeypoints (means of the detail regions), the K nearest
  /// normalized Skeypoints of each, recentered on the query, shared MLP, max
  /// over K. Both are concatenated per Skeypoint, passed through shared FC
  /// layers and max-pooled over M into the PD feature. Neighbor indices are
  /// constants; gradient reaches the Skeypoints through the recentering.
  PdeOutput pde_forward(const Tensor& coords, const Tensor& skeypoints, Mode mode) {
    require<DimensionError>(skeypoints.rank() == 3 && skeypoints.dim(2) == 3 &&
                                skeypoints.dim(0) == coords.dim(0),
                            "pde_forward: Skeypoints ", shape_str(skeypoints.shape()),
                            " do not match coords ", shape_str(coords.shape()));
    const std::size_t batch = coords.dim(0);
    const std::size_t n = coords.dim(1);
    const std::size_t c = coords.dim(2);
    const std::size_t m = skeypoints.dim(1);
    const std::size_t h = cfg_.detail_k;
    const std::size_t k = cfg_.pattern_k;
    require<ConfigError>(h <= n, "detail_k (H=", h, ") exceeds the ", n, " input points");
    require<ConfigError>(k <= m, "pattern_k (K=", k, ") exceeds the ", m, " Skeypoints");

    PdeOutput out;
    out.sets.resize(batch);
    std::vector<double> captured(batch * m * h * 3);
    std::vector<double> pattern(batch * m * k * 3);
    for (std::size_t b = 0; b < batch; ++b) {
      geometry::PointsView pts(coords.data().data() + b * n * c, n, c);
      SkeypointSet& set = out.sets[b];
      set.skeypoints.assign(skeypoints.data().begin() + b * m * 3, skeypoints.data().begin() + (b + 1) * m * 3);
      const geometry::PointsView queries(set.skeypoints);
      set.detail_regions = cfg_.local_sampling == LocalSampling::knn
                               ? geometry::knn_query(pts, queries, h)
                               : geometry::ball_query(pts, queries, cfg_.ball_radius, h);
      const auto grouped = geometry::gather_group(pts, set.detail_regions);
      std::copy(grouped.begin(), grouped.end(), captured.begin() + b * m * h * 3);
      set.normalized = geometry::region_means(pts, set.detail_regions);
      const geometry::PointsView norm(set.normalized);
      set.pattern_regions = geometry::knn_query(norm, norm, k);
      auto local = geometry::gather_group(norm, set.pattern_regions);
      if (cfg_.recenter_local)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t s = 0; s < k; ++s)
            for (std::size_t a = 0; a < 3; ++a) local[(j * k + s) * 3 + a] -= set.normalized[j * 3 + a];
      std::copy(local.begin(), local.end(), pattern.begin() + b * m * k * 3);
    }
    out.captured = Tensor::from_data({batch, m, h, 3}, std::move(captured));

    std::vector<Tensor> parts;
    if (!detail_mlp_.empty()) {
      out.detail_input = cfg_.recenter_local ? subtract_center(out.captured, skeypoints) : out.captured;
      out.detail_feature = max_pool_axis(detail_mlp_.forward(out.detail_input, mode), 2).values;
      parts.push_back(out.detail_feature);
    }
    if (!pattern_mlp_.empty()) {
      const Tensor pattern_input = Tensor::from_data({batch, m, k, 3}, std::move(pattern));
      out.pattern_feature = max_pool_axis(pattern_mlp_.forward(pattern_input, mode), 2).values;
      parts.push_back(out.pattern_feature);
    }
    out.combined = parts.size() == 1 ? parts[0] : concat(parts, 2);
    out.per_skeypoint = pd_fc_.forward(out.combined, mode);
    out.pd_feature = max_pool_axis(out.per_skeypoint, 1).values;
    return out;
  }

  /// Global and PD features concatenated, then FC layers to class logits.
  Tensor classify_head(const Tensor& global_feature, const Tensor& pd_feature, Mode mode, Rng* rng) {
    return head_.forward(concat({global_feature, pd_feature}, 1), mode, rng);
  }

  /// Per-point logits from the point-feature tap, Skeypoint features
  /// interpolated from the three nearest normalized Skeypoints, and the
  /// global and PD features broadcast to every point.
  Tensor segment_head(const Tensor& point_feats, const Tensor& per_skeypoint,
                      const std::vector<SkeypointSet>& sets, const Tensor& coords,
                      const Tensor& global_feature, const Tensor& pd_feature, Mode mode, Rng* rng,
                      Interpolation* interp_out = nullptr) {
    const std::size_t batch = coords.dim(0);
    const std::size_t n = coords.dim(1);
    const std::size_t c = coords.dim(2);
    Interpolation interp;
    for (std::size_t b = 0; b < batch; ++b)
      interpolation_weights(geometry::PointsView(coords.data().data() + b * n * c, n, c),
                            geometry::PointsView(sets[b].normalized), interp);
    const Tensor spread =
        weighted_gather(per_skeypoint, interp.index, interp.weights, n, kInterpNeighbors);
    if (interp_out) *interp_out = std::move(interp);
    const Tensor joined = concat(
        {point_feats, spread, broadcast_rows(global_feature, n), broadcast_rows(pd_feature, n)}, 2);
    return head_.forward(joined, mode, rng);
  }

  ModelOutput forward(const Tensor& coords, Mode mode, const ForwardOptions& options = {}) {
    ModelOutput out;
    PointFeatures pf = point_feature_extract(coords, mode);
    out.global_feature = pf.global_feature;
    out.point_features = pf.point_feats;
    Tensor sk = cfg_.keypoint_source == KeypointSource::learned
                    ? infer_skeypoints(pf.global_feature, mode)
                    : baseline_keypoints(coords, options.rng);
    if (options.skeypoint_noise > 0.0) {
      require(options.rng != nullptr, "Skeypoint noise needs an rng");
      std::normal_distribution<double> gauss(0.0, options.skeypoint_noise);
      std::vector<double> noise(sk.numel());
      for (double& v : noise) v = gauss(*options.rng);
      sk = add(sk, Tensor::from_data(sk.shape(), std::move(noise)));
    }
    out.skeypoints = sk;
    PdeOutput pde = pde_forward(coords, sk, mode);
    out.captured = pde.captured;
    out.pd_feature = pde.pd_feature;
    out.per_skeypoint_features = pde.per_skeypoint;
    if (cfg_.task == Task::classification)
      out.logits = classify_head(pf.global_feature, pde.pd_feature, mode, options.rng);
    else
      out.logits = segment_head(pf.point_feats, pde.per_skeypoint, pde.sets, coords, pf.global_feature,
                                pde.pd_feature, mode, options.rng);
    out.sets = std::move(pde.sets);
    return out;
  }

  std::vector<NamedTensor> parameters() {
    std::vector<NamedTensor> params;
    std::vector<NamedBatchNorm> buffers;
    collect(params, buffers);
    return params;
  }

  std::vector<NamedBatchNorm> batch_norm_states() {
    std::vector<NamedTensor> params;
    std::vector<NamedBatchNorm> buffers;
    collect(params, buffers);
    return buffers;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

  DenseStack& head() { return head_; }

 private:
  void collect(std::vector<NamedTensor>& params, std::vector<NamedBatchNorm>& buffers) {
    point_mlp_.collect("point_mlp", params, buffers);
    skeypoint_fc_.collect("skeypoint_fc", params, buffers);
    detail_mlp_.collect("detail_mlp", params, buffers);
    pattern_mlp_.collect("pattern_mlp", params, buffers);
    pd_fc_.collect("pd_fc", params, buffers);
    head_.collect("head", params, buffers);
  }

  ModelConfig cfg_;
  std::size_t tap_index_ = 0;
  DenseStack point_mlp_;
  DenseStack skeypoint_fc_;
  DenseStack detail_mlp_;
  DenseStack pattern_mlp_;
  DenseStack pd_fc_;
  DenseStack head_;
};

}  // namespace sknet
