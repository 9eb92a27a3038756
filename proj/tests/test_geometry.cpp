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
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "sknet/geometry.hpp"
#include "support.hpp"

namespace sknet::geometry {
namespace {

using testing::Gen;

std::vector<std::vector<std::size_t>> rows_of(const GroupedRegions& r) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t j = 0; j < r.region_count; ++j) out.emplace_back(r.row(j).begin(), r.row(j).end());
  return out;
}

const std::vector<double> kLine{0, 0, 0, 1, 0, 0, 3, 0, 0};

TEST(Knn, HandExample) {
  const std::vector<double> q{0.9, 0, 0};
  const auto r = knn_query(PointsView(kLine), PointsView(q), 2);
  EXPECT_EQ(r.region_count, 1u);
  EXPECT_EQ(r.group_size, 2u);
  EXPECT_EQ(r.source_size, 3u);
  EXPECT_EQ(rows_of(r)[0], (std::vector<std::size_t>{1, 0}));
}

TEST(Knn, KEqualsNReturnsAllSorted) {
  const std::vector<double> q{2.5, 0, 0};
  EXPECT_EQ(rows_of(knn_query(PointsView(kLine), PointsView(q), 3))[0], (std::vector<std::size_t>{2, 1, 0}));
}

TEST(Knn, TiesBreakByIndex) {
  // Query equidistant from points 0, 1 and 3 on an integer grid (exact arithmetic).
  const std::vector<double> pts{1, 0, 0, -1, 0, 0, 5, 5, 5, 0, 1, 0};
  const std::vector<double> q{0, 0, 0};
  EXPECT_EQ(rows_of(knn_query(PointsView(pts), PointsView(q), 3))[0], (std::vector<std::size_t>{0, 1, 3}));
}

TEST(Knn, Errors) {
  const std::vector<double> q{0, 0, 0};
  EXPECT_ANY_THROW(knn_query(PointsView(kLine), PointsView(q), 4));
  EXPECT_ANY_THROW(knn_query(PointsView(), PointsView(q), 1));
}

TEST(Knn, MatchesExhaustiveSortOracle) {
  Gen g(1);
  std::uniform_int_distribution<std::size_t> n_dist(1, 200), m_dist(1, 50), k_dist(1, 16);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = n_dist(g), m = m_dist(g), k = std::min(n, k_dist(g));
    const auto pts = testing::random_cloud(g, n);
    const auto qs = testing::random_cloud(g, m);
    ASSERT_EQ(rows_of(knn_query(PointsView(pts), PointsView(qs), k)), testing::oracle::knn(pts, qs, k))
        << "trial " << trial;
  }
}

TEST(Knn, StridedViewReadsXyzOnly) {
  // [N,6] rows with normals: the view must skip the trailing channels.
  const std::vector<double> rows{0, 0, 0, 9, 9, 9, 1, 0, 0, -9, -9, -9, 3, 0, 0, 0, 0, 0};
  const std::vector<double> q{0.9, 0, 0};
  EXPECT_EQ(rows_of(knn_query(PointsView(rows.data(), 3, 6), PointsView(q), 2))[0],
            (std::vector<std::size_t>{1, 0}));
}

TEST(BallQuery, OnlyPointsInsideRadius) {
  std::vector<double> pts;
  for (int i = -10; i <= 10; ++i) pts.insert(pts.end(), {i / 10.0, 0, 0});
  const std::vector<double> q{0, 0, 0};
  const auto r = ball_query(PointsView(pts), PointsView(q), 0.5, 21);
  std::set<std::size_t> distinct(r.row(0).begin(), r.row(0).end());
  for (std::size_t i : distinct) EXPECT_LE(std::abs(pts[3 * i]), 0.5);
  EXPECT_EQ(distinct.size(), 11u);
}

TEST(BallQuery, PadsWithNearestMember) {
  const std::vector<double> q{0.1, 0, 0};
  const auto r = ball_query(PointsView(kLine), PointsView(q), 1.5, 4);
  EXPECT_EQ(rows_of(r)[0], (std::vector<std::size_t>{0, 1, 0, 0}));
}

TEST(BallQuery, EmptyBallFallsBackToNearest) {
  const std::vector<double> q{2.6, 0, 0};
  EXPECT_EQ(rows_of(ball_query(PointsView(kLine), PointsView(q), 0.1, 3))[0], (std::vector<std::size_t>{2, 2, 2}));
}

TEST(BallQuery, HugeRadiusMatchesKnn) {
  Gen g(2);
  const auto pts = testing::random_cloud(g, 50);
  const auto qs = testing::random_cloud(g, 10);
  EXPECT_EQ(rows_of(ball_query(PointsView(pts), PointsView(qs), 10.0, 8)),
            rows_of(knn_query(PointsView(pts), PointsView(qs), 8)));
}

TEST(BallQuery, Errors) {
  const std::vector<double> q{0, 0, 0};
  EXPECT_ANY_THROW(ball_query(PointsView(), PointsView(q), 0.5, 2));
  EXPECT_ANY_THROW(ball_query(PointsView(kLine), PointsView(q), 0.0, 2));
}

TEST(BallQuery, MatchesBruteForceOracle) {
  Gen g(3);
  std::uniform_int_distribution<std::size_t> n_dist(1, 200), m_dist(1, 50), k_dist(1, 16);
  std::uniform_real_distribution<double> r_dist(0.05, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = n_dist(g), m = m_dist(g), k = k_dist(g);
    const double radius = r_dist(g);
    const auto pts = testing::random_cloud(g, n);
    const auto qs = testing::random_cloud(g, m);
    ASSERT_EQ(rows_of(ball_query(PointsView(pts), PointsView(qs), radius, k)),
              testing::oracle::ball(pts, qs, radius, k))
        << "trial " << trial;
  }
}

TEST(Fps, HandTrace) {
  EXPECT_EQ(farthest_point_sampling(PointsView(kLine), 3, 0), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(Fps, CountOneIsSeed) {
  EXPECT_EQ(farthest_point_sampling(PointsView(kLine), 1, 2), (std::vector<std::size_t>{2}));
}

TEST(Fps, CountNIsPermutation) {
  Gen g(4);
  const auto pts = testing::random_cloud(g, 40);
  auto sel = farthest_point_sampling(PointsView(pts), 40, 0);
  std::sort(sel.begin(), sel.end());
  std::vector<std::size_t> all(40);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(sel, all);
}

TEST(Fps, CountTooLargeThrows) { EXPECT_ANY_THROW(farthest_point_sampling(PointsView(kLine), 4, 0)); }

TEST(Fps, TiesPickLowestIndex) {
  // From the origin, points 1 and 2 are equally far.
  const std::vector<double> pts{0, 0, 0, 2, 0, 0, -2, 0, 0};
  EXPECT_EQ(farthest_point_sampling(PointsView(pts), 2, 0), (std::vector<std::size_t>{0, 1}));
}

TEST(Fps, PermutationCovariant) {
  Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = testing::random_cloud(g, 60);
    const auto perm = testing::random_permutation(g, 60);  // new position i holds old point perm[i]
    std::vector<double> moved(pts.size());
    std::vector<std::size_t> where(60);
    for (std::size_t i = 0; i < 60; ++i) {
      std::copy_n(pts.data() + 3 * perm[i], 3, moved.data() + 3 * i);
      where[perm[i]] = i;
    }
    const auto a = farthest_point_sampling(PointsView(pts), 12, 0);
    const auto b = farthest_point_sampling(PointsView(moved), 12, where[0]);
    for (std::size_t s = 0; s < 12; ++s) EXPECT_EQ(b[s], where[a[s]]);
  }
}

TEST(Fps, DominatesRandomSelectionSpread) {
  Gen g(6);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = testing::random_cloud(g, 200);
    const PointsView view(pts);
    auto subset = [&](const std::vector<std::size_t>& idx) {
      std::vector<double> out;
      for (std::size_t i : idx) out.insert(out.end(), pts.begin() + 3 * i, pts.begin() + 3 * i + 3);
      return out;
    };
    const auto f = subset(farthest_point_sampling(view, 16, 0));
    const auto r = subset(random_dropout_sample(view, 16, g));
    wins += min_pairwise_squared_distance(PointsView(f)) >= min_pairwise_squared_distance(PointsView(r));
  }
  EXPECT_GE(wins, 90);
}

TEST(RandomDropout, CountNIsPermutation) {
  std::mt19937_64 rng(7);
  auto sel = random_dropout_sample(25, 25, rng);
  std::sort(sel.begin(), sel.end());
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(sel[i], i);
}

TEST(RandomDropout, SeedDetermines) {
  std::mt19937_64 a(8), b(8);
  EXPECT_EQ(random_dropout_sample(100, 10, a), random_dropout_sample(100, 10, b));
}

TEST(RandomDropout, DistinctAndInRange) {
  std::mt19937_64 rng(9);
  const auto sel = random_dropout_sample(30, 12, rng);
  EXPECT_EQ(std::set<std::size_t>(sel.begin(), sel.end()).size(), 12u);
  for (std::size_t i : sel) EXPECT_LT(i, 30u);
  EXPECT_ANY_THROW(random_dropout_sample(5, 6, rng));
}

TEST(RandomDropout, InclusionFrequencyIsUniform) {
  std::mt19937_64 rng(10);
  const std::size_t n = 20, count = 5, draws = 10000;
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t d = 0; d < draws; ++d)
    for (std::size_t i : random_dropout_sample(n, count, rng)) ++hits[i];
  const double p = static_cast<double>(count) / static_cast<double>(n);
  const double mean = p * static_cast<double>(draws);
  const double sigma = std::sqrt(static_cast<double>(draws) * p * (1 - p));
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(static_cast<double>(hits[i]), mean, 3.5 * sigma) << i;
}

TEST(GatherGroup, SingleRegion) {
  const std::vector<double> pts{0, 0, 0, 2, 0, 0};
  const GroupedRegions r{1, 2, 2, {0, 1}};
  EXPECT_EQ(gather_group(PointsView(pts), r), (std::vector<double>{0, 0, 0, 2, 0, 0}));
}

TEST(GatherGroup, IdentityRegionsReproducePoints) {
  Gen g(11);
  const auto pts = testing::random_cloud(g, 7);
  GroupedRegions r{7, 1, 7, {}};
  for (std::size_t i = 0; i < 7; ++i) r.members.push_back(i);
  EXPECT_EQ(gather_group(PointsView(pts), r), pts);
}

TEST(GatherGroup, MeansMatchDirectAverage) {
  Gen g(12);
  const auto pts = testing::random_cloud(g, 100);
  const auto qs = testing::random_cloud(g, 10);
  const auto regions = knn_query(PointsView(pts), PointsView(qs), 6);
  const auto grouped = gather_group(PointsView(pts), regions);
  const auto means = region_means(PointsView(pts), regions);
  for (std::size_t j = 0; j < 10; ++j)
    for (std::size_t a = 0; a < 3; ++a) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) s += grouped[(j * 6 + k) * 3 + a];
      EXPECT_NEAR(means[j * 3 + a], s / 6.0, 1e-12);
    }
  const std::vector<double> two{0, 0, 0, 2, 0, 0};
  EXPECT_EQ(region_means(PointsView(two), GroupedRegions{1, 2, 2, {0, 1}}), (std::vector<double>{1, 0, 0}));
}

TEST(Statistics, SpreadAndCloseness) {
  EXPECT_DOUBLE_EQ(min_pairwise_squared_distance(PointsView(kLine)), 1.0);
  // Nearest-neighbor squared distances: 1, 1, 4.
  EXPECT_DOUBLE_EQ(mean_nearest_neighbor_squared_distance(PointsView(kLine)), 2.0);
  const std::vector<double> q{0, 2, 0, 3, 0, 1};
  EXPECT_DOUBLE_EQ(mean_distance_to_nearest(PointsView(q), PointsView(kLine)), 1.5);
}

}  // namespace
}  // namespace sknet::geometry
