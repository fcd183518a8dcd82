// Copyright 2026 The segtrack Authors.
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

#include <random>

#include "segtrack/cluster.hpp"
#include "segtrack/errors.hpp"
#include "test_util.hpp"

namespace segtrack {
namespace {

using testing::rect_mask;

// Stack with zero offsets, sigma 1 and all seed mass on background.
DenseMapStack blank_stack(int h, int w) {
  DenseMapStack s(kNumSemanticClasses, h, w, 0.25 * std::max(h, w));
  const std::size_t n = s.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    s.seed[i] = 1.0;
    s.sigma[i] = 1.0;
  }
  return s;
}

// Paints an instance whose offsets point exactly at the mask centroid.
void paint(DenseMapStack& s, const Mask& m, int cls, double seed, double sigma) {
  double cx = 0, cy = 0;
  const std::size_t n = s.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    cx += double(i % s.width);
    cy += double(i / s.width);
  }
  cx /= double(m.area());
  cy /= double(m.area());
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    for (int c = 0; c < s.num_classes; ++c) s.seed[c * n + i] = 0.0;
    s.seed[cls * n + i] = seed;
    s.seed[i] = 1.0 - seed;
    s.sigma[i] = sigma;
    s.offset[i] = cx - double(i % s.width);
    s.offset[n + i] = cy - double(i / s.width);
  }
}

void expect_same(const InstanceSegmentation& a, const InstanceSegmentation& b) {
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t k = 0; k < a.instances.size(); ++k) {
    EXPECT_EQ(a.instances[k].mask, b.instances[k].mask) << k;
    EXPECT_EQ(a.instances[k].class_id, b.instances[k].class_id);
    EXPECT_EQ(a.instances[k].instance_id, b.instances[k].instance_id);
  }
}

TEST(ClusterParamsTest, Validation) {
  ClusterParams p;
  EXPECT_NO_THROW(p.validate());
  p.seed_threshold = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.assign_threshold = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.min_pixels = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Cluster, LowSeedsGiveNoInstances) {
  std::mt19937_64 rng(1);
  DenseMapStack s = testing::random_stack(16, 16, rng);
  const std::size_t n = s.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    s.seed[n + i] = 0.3;
    s.seed[2 * n + i] = 0.2;
    s.seed[i] = 0.5;
  }
  ClusterParams p;
  p.min_pixels = 1;
  EXPECT_TRUE(cluster_instances(s, p).instances.empty());
  EXPECT_TRUE(brute_force_cluster_oracle(s, p).instances.empty());
}

TEST(Cluster, RecoversAnalyticInstances) {
  DenseMapStack s = blank_stack(32, 32);
  Mask car = rect_mask(32, 32, 2, 3, 12, 15);
  Mask ped = rect_mask(32, 32, 16, 18, 30, 24);
  Mask car2 = rect_mask(32, 32, 20, 2, 28, 12);
  paint(s, car, 1, 0.95, 6.0);
  paint(s, ped, 2, 0.9, 6.0);
  paint(s, car2, 1, 0.85, 6.0);
  ClusterParams p;
  p.min_pixels = 16;
  InstanceSegmentation out = cluster_instances(s, p);
  ASSERT_EQ(out.instances.size(), 3u);
  EXPECT_EQ(out.instances[0].mask, car);
  EXPECT_EQ(out.instances[0].class_id, ClassId::kCar);
  EXPECT_EQ(out.instances[1].mask, car2);
  EXPECT_EQ(out.instances[2].mask, ped);
  EXPECT_EQ(out.instances[2].class_id, ClassId::kPedestrian);
  expect_same(out, brute_force_cluster_oracle(s, p));
}

TEST(Cluster, MinPixelsDropsSmallClusters) {
  DenseMapStack s = blank_stack(16, 16);
  paint(s, rect_mask(16, 16, 1, 1, 4, 4), 1, 0.9, 3.0);
  paint(s, rect_mask(16, 16, 8, 8, 14, 14), 1, 0.8, 3.0);
  ClusterParams p;
  p.min_pixels = 10;
  InstanceSegmentation out = cluster_instances(s, p);
  ASSERT_EQ(out.instances.size(), 1u);
  EXPECT_EQ(out.instances[0].mask.area(), 36u);
  EXPECT_EQ(out.instances[0].instance_id, 1);
}

TEST(Cluster, TiesBrokenByRowMajorOrder) {
  // Two identical-score pixels far apart with tiny sigma: the earlier one becomes instance 1.
  DenseMapStack s = blank_stack(4, 4);
  const std::size_t n = s.pixels();
  for (std::size_t i : {std::size_t(13), std::size_t(2)}) {
    s.seed[i] = 0.3;
    s.seed[n + i] = 0.7;
    s.sigma[i] = 0.1;
  }
  ClusterParams p;
  p.min_pixels = 1;
  InstanceSegmentation out = cluster_instances(s, p);
  ASSERT_EQ(out.instances.size(), 2u);
  EXPECT_TRUE(out.instances[0].mask[2]);
  EXPECT_TRUE(out.instances[1].mask[13]);
  expect_same(out, brute_force_cluster_oracle(s, p));
}

void check_invariants(const DenseMapStack& s, const InstanceSegmentation& out, const ClusterParams& p) {
  EXPECT_TRUE(are_disjoint(out.instances));
  for (const auto& im : out.instances) {
    EXPECT_GE(static_cast<int>(im.mask.area()), p.min_pixels);
    const int c = static_cast<int>(im.class_id);
    for (std::size_t i = 0; i < s.pixels(); ++i) {
      if (!im.mask[i]) continue;
      // every member is a candidate of its class
      for (int d = 1; d < s.num_classes; ++d) EXPECT_LE(s.seed_at(d, i), s.seed_at(c, i));
      EXPECT_GE(s.seed_at(c, i), p.seed_threshold);
    }
  }
}

class ClusterOracle : public ::testing::TestWithParam<SigmaFrom> {};

TEST_P(ClusterOracle, RandomStacksMatchBruteForce) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    DenseMapStack s = testing::random_stack(16, 16, rng, 4.0);
    // Sharpen seeds so a good share of pixels become candidates.
    const std::size_t n = s.pixels();
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(u(rng) * 3);
      for (int k = 0; k < 3; ++k) s.seed[k * n + i] *= 0.3;
      s.seed[c * n + i] += 0.7;
    }
    if (t % 4 == 1)  // exact ties in seed values
      for (std::size_t i = 0; i < n; ++i) s.seed[n + i] = std::round(s.seed[n + i] * 4) / 4;
    ClusterParams p;
    p.sigma_from = GetParam();
    p.min_pixels = 1 + t % 6;
    p.seed_threshold = 0.3 + 0.4 * u(rng);
    p.assign_threshold = 0.1 + 0.8 * u(rng);
    InstanceSegmentation fast = cluster_instances(s, p);
    InstanceSegmentation ref = brute_force_cluster_oracle(s, p);
    expect_same(fast, ref);
    check_invariants(s, fast, p);
  }
}

TEST_P(ClusterOracle, DegenerateStacks) {
  ClusterParams p;
  p.sigma_from = GetParam();
  p.min_pixels = 1;
  // all pixels identical
  DenseMapStack same = blank_stack(8, 8);
  const std::size_t n = same.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    same.seed[i] = 0.2;
    same.seed[n + i] = 0.8;
  }
  expect_same(cluster_instances(same, p), brute_force_cluster_oracle(same, p));
  // vanishing sigma: every candidate becomes its own cluster
  DenseMapStack tiny = same;
  for (auto& v : tiny.sigma) v = 1e-300;
  InstanceSegmentation out = cluster_instances(tiny, p);
  EXPECT_EQ(out.instances.size(), n);
  expect_same(out, brute_force_cluster_oracle(tiny, p));
}

INSTANTIATE_TEST_SUITE_P(SigmaSource, ClusterOracle, ::testing::Values(SigmaFrom::kSeed, SigmaFrom::kMean));

TEST(ClusterProperties, TranslationMovesMasks) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    DenseMapStack s = testing::random_stack(12, 12, rng, 3.0);
    // embed in a larger canvas shifted by (dy, dx) with background elsewhere
    const int dy = 3 + t % 4, dx = 5 - t % 3;
    DenseMapStack big = blank_stack(24, 24);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        const std::size_t i = y * 12 + x, j = (y + dy) * 24 + (x + dx);
        for (int c = 0; c < 3; ++c) big.seed[c * big.pixels() + j] = s.seed_at(c, i);
        big.sigma[j] = s.sigma[i];
        big.offset[j] = s.offset[i];
        big.offset[big.pixels() + j] = s.offset[s.pixels() + i];
      }
    }
    ClusterParams p;
    p.min_pixels = 2;
    p.seed_threshold = 0.4;
    InstanceSegmentation a = cluster_instances(s, p), b = cluster_instances(big, p);
    ASSERT_EQ(a.instances.size(), b.instances.size());
    for (std::size_t k = 0; k < a.instances.size(); ++k) {
      EXPECT_EQ(a.instances[k].mask.area(), b.instances[k].mask.area());
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) EXPECT_EQ(a.instances[k].mask.at(y, x), b.instances[k].mask.at(y + dy, x + dx));
    }
  }
}

TEST(ClusterProperties, RaisingSeedThresholdNeverAddsInstances) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    DenseMapStack s = testing::random_stack(16, 16, rng, 2.0);
    ClusterParams p;
    p.min_pixels = 3;
    std::size_t prev = SIZE_MAX;
    for (double th : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) {
      p.seed_threshold = th;
      const std::size_t k = cluster_instances(s, p).instances.size();
      EXPECT_LE(k, prev) << th;
      prev = k;
    }
  }
}

}  // namespace
}  // namespace segtrack
