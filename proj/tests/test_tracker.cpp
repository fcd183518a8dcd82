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
#include <set>

#include "segtrack/errors.hpp"
#include "segtrack/tracker.hpp"
#include "test_util.hpp"

namespace segtrack {
namespace {

Detection det(ClassId c, std::vector<double> e) {
  Detection d;
  d.mask = testing::instance(testing::rect_mask(4, 4, 0, 0, 1, 1), c, 1);
  d.embedding = std::move(e);
  return d;
}

TEST(Assignment, EmptyAndTrivial) {
  EXPECT_TRUE(solve_assignment({}, {}).empty());
  EXPECT_EQ(solve_assignment({{0.3}}, {{1}}), std::vector<int>{0});
  EXPECT_EQ(solve_assignment({{0.3}}, {{0}}), std::vector<int>{-1});
}

TEST(Assignment, PrefersMoreMatchesOverLowerCost) {
  // Row 0 alone could take column 0 cheaply, but then row 1 has nothing.
  std::vector<std::vector<double>> cost = {{0.1, 0.9}, {0.2, 5.0}};
  std::vector<std::vector<char>> allowed = {{1, 1}, {1, 0}};
  EXPECT_EQ(solve_assignment(cost, allowed), (std::vector<int>{1, 0}));
}

TEST(Assignment, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int cases = 0;
  for (int n = 0; n <= 6; ++n) {
    for (int m = 0; m <= 6; ++m) {
      for (int t = 0; t < 30; ++t) {
        std::vector<std::vector<double>> cost(n, std::vector<double>(m));
        std::vector<std::vector<char>> allowed(n, std::vector<char>(m));
        const double density = (t % 3 + 1) / 3.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            cost[i][j] = t % 5 == 0 ? std::round(u(rng) * 3) : u(rng);  // integer costs create ties
            allowed[i][j] = u(rng) < density;
          }
        auto fast = solve_assignment(cost, allowed);
        auto ref = brute_force_assignment(cost, allowed);
        auto count = [](const std::vector<int>& r) { return std::count_if(r.begin(), r.end(), [](int c) { return c >= 0; }); };
        EXPECT_EQ(count(fast), count(ref));
        EXPECT_NEAR(assignment_cost(cost, fast), assignment_cost(cost, ref), 1e-9);
        std::set<int> cols;
        for (int i = 0; i < n; ++i) {
          if (fast[i] < 0) continue;
          EXPECT_TRUE(allowed[i][fast[i]]);
          EXPECT_TRUE(cols.insert(fast[i]).second);
        }
        ++cases;
      }
    }
  }
  EXPECT_EQ(cases, 49 * 30);
}

TEST(Assignment, FiveByFiveUniqueOptimumIdentical) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> cost(5, std::vector<double>(5));
    std::vector<std::vector<char>> allowed(5, std::vector<char>(5, 1));
    for (auto& r : cost)
      for (auto& c : r) c = u(rng);
    EXPECT_EQ(solve_assignment(cost, allowed), brute_force_assignment(cost, allowed));
  }
}

TEST(Associate, ZeroTracksAllBirths) {
  TrackerParams p;
  Assignment a = associate({}, {det(ClassId::kCar, {0, 0}), det(ClassId::kCar, {1, 1})}, p);
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_detections, (std::vector<int>{0, 1}));
}

TEST(Associate, GateAndClass) {
  TrackerParams p;
  p.max_distance = 0.5;
  Track t;
  t.class_id = ClassId::kCar;
  t.embedding = {0.0, 0.0};
  Assignment a = associate({t}, {det(ClassId::kCar, {0.3, 0.0})}, p);
  ASSERT_EQ(a.matches.size(), 1u);
  a = associate({t}, {det(ClassId::kCar, {0.6, 0.0})}, p);
  EXPECT_TRUE(a.matches.empty());
  a = associate({t}, {det(ClassId::kPedestrian, {0.0, 0.0})}, p);
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_tracks, std::vector<int>{0});
  EXPECT_THROW(associate({t}, {det(ClassId::kCar, {0.0, 0.0, 0.0})}, p), ContractViolation);
}

TEST(TrackerTest, SingleObjectKeepsId) {
  Tracker tr(TrackerParams{});
  for (int f = 0; f < 10; ++f) {
    auto ids = tr.step(f, {det(ClassId::kCar, {1.0, 0.01 * f})});
    EXPECT_EQ(ids, std::vector<int>{1});
  }
}

TEST(TrackerTest, LifecycleAroundMaxAge) {
  TrackerParams p;
  p.max_age = 3;
  Tracker tr(p);
  tr.step(0, {det(ClassId::kCar, {0.0})});
  // absent for exactly max_age frames: survives
  for (int f = 1; f <= 3; ++f) tr.step(f, {});
  EXPECT_EQ(tr.step(4, {det(ClassId::kCar, {0.0})}), std::vector<int>{1});
  // absent for max_age + 1 frames: dies, reappearance is a birth
  for (int f = 5; f <= 8; ++f) tr.step(f, {});
  EXPECT_TRUE(tr.tracks().empty());
  EXPECT_EQ(tr.step(9, {det(ClassId::kCar, {0.0})}), std::vector<int>{2});
}

TEST(TrackerTest, OutOfOrderFrameRejected) {
  Tracker tr(TrackerParams{});
  tr.step(3, {});
  EXPECT_THROW(tr.step(3, {}), ContractViolation);
  EXPECT_THROW(tr.step(1, {}), ContractViolation);
}

TEST(TrackerTest, MomentumUpdate) {
  TrackerParams p;
  p.momentum = 0.75;
  Tracker tr(p);
  tr.step(0, {det(ClassId::kCar, {0.0, 0.0})});
  tr.step(1, {det(ClassId::kCar, {0.4, 0.0})});
  ASSERT_EQ(tr.tracks().size(), 1u);
  EXPECT_DOUBLE_EQ(tr.tracks()[0].embedding[0], 0.1);
  EXPECT_EQ(tr.tracks()[0].history, (std::vector<int>{0, 1}));
}

TEST(TrackerTest, IdsDistinctNeverReusedAndCausal) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<Detection>> frames;
  for (int f = 0; f < 40; ++f) {
    std::vector<Detection> d;
    for (int k = 0; k < 5; ++k)
      if (u(rng) < 0.7) d.push_back(det(k % 2 ? ClassId::kCar : ClassId::kPedestrian, {k + noise(rng), noise(rng)}));
    frames.push_back(d);
  }
  TrackerParams p;
  p.max_age = 2;
  Tracker full(p);
  std::vector<std::vector<int>> out;
  std::set<int> dead_or_alive;
  for (int f = 0; f < 40; ++f) {
    auto ids = full.step(f, frames[f]);
    std::set<int> uniq(ids.begin(), ids.end());
    EXPECT_EQ(uniq.size(), ids.size());
    out.push_back(ids);
  }
  // a prefix run gives the same ids for the prefix
  Tracker prefix(p);
  for (int f = 0; f < 20; ++f) EXPECT_EQ(prefix.step(f, frames[f]), out[f]);
  // an id, once its track dies, never shows up again
  std::map<int, int> last_seen;
  for (int f = 0; f < 40; ++f)
    for (int id : out[f]) {
      if (last_seen.count(id)) {
        EXPECT_LE(f - last_seen[id], p.max_age + 1);
      }
      last_seen[id] = f;
    }
}

TEST(TrackerParamsTest, Validation) {
  TrackerParams p;
  p.max_distance = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.momentum = 1.5;
  EXPECT_THROW(Tracker{p}, ConfigError);
  p = {};
  p.max_age = 7;
  EXPECT_EQ(TrackerParams::from_kv(p.to_kv()).max_age, 7);
}

}  // namespace
}  // namespace segtrack
