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
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "sknet/error.hpp"

namespace sknet::geometry {

/// Read-only view of `count` xyz points; consecutive points are `stride`
/// doubles apart so that [N,6] coordinate+normal rows can be viewed directly.
struct PointsView {
  const double* data = nullptr;
  std::size_t count = 0;
  std::size_t stride = 3;

  PointsView() = default;
  PointsView(const double* d, std::size_t n, std::size_t s = 3) : data(d), count(n), stride(s) {}
  explicit PointsView(std::span<const double> xyz)
      : data(xyz.data()), count(xyz.size() / 3), stride(3) {}

  std::size_t size() const { return count; }
  bool empty() const { return count == 0; }
  const double* operator[](std::size_t i) const { return data + i * stride; }
};

inline double squared_distance(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// M regions of S member indices each into a source set of N points.
/// Rows are ordered nearest-first with ties broken by ascending index.
struct GroupedRegions {
  std::size_t region_count = 0;
  std::size_t group_size = 0;
  std::size_t source_size = 0;
  std::vector<std::size_t> members;  // region_count x group_size, row-major

  std::span<const std::size_t> row(std::size_t j) const {
    return {members.data() + j * group_size, group_size};
  }
  std::size_t at(std::size_t j, std::size_t s) const { return members[j * group_size + s]; }
};

namespace detail {

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

inline void distances_to(PointsView points, const double* query, std::vector<Candidate>& out) {
  out.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    out[i] = {squared_distance(points[i], query), i};
}

}  // namespace detail

/// Indices of the k points nearest each query, by squared Euclidean
/// distance; equal distances resolve to the lower index.
inline GroupedRegions knn_query(PointsView points, PointsView queries, std::size_t k) {
  require(!points.empty(), "knn_query: empty point set");
  require(k >= 1 && k <= points.size(), "knn_query: k=", k, " but only ", points.size(),
          " points");
  GroupedRegions regions{queries.size(), k, points.size(), {}};
  regions.members.resize(queries.size() * k);
  std::vector<detail::Candidate> cand;
  for (std::size_t j = 0; j < queries.size(); ++j) {
    detail::distances_to(points, queries[j], cand);
    const auto kth = cand.begin() + static_cast<std::ptrdiff_t>(k);
    if (k < cand.size()) std::nth_element(cand.begin(), kth - 1, cand.end());
    std::sort(cand.begin(), kth);
    for (std::size_t s = 0; s < k; ++s) regions.members[j * k + s] = cand[s].second;
  }
  return regions;
}

/// Up to `max_samples` points within `radius` of each query, nearest first.
/// Short rows repeat their nearest member; a query with nothing inside the
/// ball falls back to its single nearest point.
inline GroupedRegions ball_query(PointsView points, PointsView queries, double radius,
                                 std::size_t max_samples) {
  require(!points.empty(), "ball_query: empty point set");
  require<ConfigError>(radius > 0.0, "ball_query: radius must be positive, got ", radius);
  require<ConfigError>(max_samples >= 1, "ball_query: max_samples must be >= 1");
  const double r2 = radius * radius;
  GroupedRegions regions{queries.size(), max_samples, points.size(), {}};
  regions.members.resize(queries.size() * max_samples);
  std::vector<detail::Candidate> cand;
  for (std::size_t j = 0; j < queries.size(); ++j) {
    detail::distances_to(points, queries[j], cand);
    auto inside_end = std::partition(cand.begin(), cand.end(),
                                     [r2](const detail::Candidate& c) { return c.first <= r2; });
    std::size_t inside = static_cast<std::size_t>(inside_end - cand.begin());
    if (inside == 0) {
      cand[0] = *std::min_element(cand.begin(), cand.end());
      inside = 1;
    }
    const std::size_t take = std::min(inside, max_samples);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take),
                      cand.begin() + static_cast<std::ptrdiff_t>(inside));
    std::size_t* row = regions.members.data() + j * max_samples;
    for (std::size_t s = 0; s < max_samples; ++s) row[s] = s < take ? cand[s].second : cand[0].second;
  }
  return regions;
}

/// Greedy max-min selection of `count` points starting at `seed_index`.
/// Ties pick the lowest index.
inline std::vector<std::size_t> farthest_point_sampling(PointsView points, std::size_t count,
                                                        std::size_t seed_index = 0) {
  require(count <= points.size(), "farthest_point_sampling: count=", count, " exceeds ",
          points.size(), " points");
  if (count == 0) return {};
  require(seed_index < points.size(), "farthest_point_sampling: seed index ", seed_index,
          " out of range");
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  for (std::size_t step = 0; step < count; ++step) {
    picked.push_back(current);
    nearest[current] = -1.0;
    std::size_t best = 0;
    double best_d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (nearest[i] < 0.0) continue;
      nearest[i] = std::min(nearest[i], squared_distance(points[i], points[current]));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

/// `count` distinct indices drawn uniformly from [0, n).
template <typename Urbg>
std::vector<std::size_t> random_dropout_sample(std::size_t n, std::size_t count, Urbg& rng) {
  require(count <= n, "random_dropout_sample: count=", count, " exceeds ", n, " points");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

template <typename Urbg>
std::vector<std::size_t> random_dropout_sample(PointsView points, std::size_t count, Urbg& rng) {
  return random_dropout_sample(points.size(), count, rng);
}

/// Coordinates of every region member: [M, S, 3] row-major.
inline std::vector<double> gather_group(PointsView points, const GroupedRegions& regions) {
  std::vector<double> out(regions.members.size() * 3);
  for (std::size_t k = 0; k < regions.members.size(); ++k) {
    const std::size_t idx = regions.members[k];
    require(idx < points.size(), "gather_group: index ", idx, " out of range ", points.size());
    std::copy_n(points[idx], 3, out.data() + k * 3);
  }
  return out;
}

/// Mean of each region's members: [M, 3].
inline std::vector<double> region_means(PointsView points, const GroupedRegions& regions) {
  std::vector<double> out(regions.region_count * 3, 0.0);
  for (std::size_t j = 0; j < regions.region_count; ++j) {
    double* m = out.data() + j * 3;
    for (std::size_t s = 0; s < regions.group_size; ++s) {
      const double* p = points[regions.at(j, s)];
      m[0] += p[0];
      m[1] += p[1];
      m[2] += p[2];
    }
    const double inv = 1.0 / static_cast<double>(regions.group_size);
    m[0] *= inv;
    m[1] *= inv;
    m[2] *= inv;
  }
  return out;
}

/// Smallest squared distance between two distinct points of the set.
inline double min_pairwise_squared_distance(PointsView points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      best = std::min(best, squared_distance(points[i], points[j]));
  return best;
}

/// Mean over points of the squared distance to their nearest other point.
inline double mean_nearest_neighbor_squared_distance(PointsView points) {
  if (points.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) best = std::min(best, squared_distance(points[i], points[j]));
    total += best;
  }
  return total / static_cast<double>(points.size());
}

/// Mean over queries of the Euclidean distance to the nearest source point.
inline double mean_distance_to_nearest(PointsView queries, PointsView points) {
  if (queries.empty() || points.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < queries.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
      best = std::min(best, squared_distance(points[i], queries[j]));
    total += std::sqrt(best);
  }
  return total / static_cast<double>(queries.size());
}

}  // namespace sknet::geometry
