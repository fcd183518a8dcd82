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

#include "metrics_fixtures.hpp"
#include "segtrack/errors.hpp"
#include "segtrack/metrics.hpp"
#include "test_util.hpp"

namespace segtrack {
namespace {

using testing::instance;
using testing::rect_mask;

class MetricsFixtureTest : public ::testing::TestWithParam<fixtures::MetricsFixture> {};

TEST_P(MetricsFixtureTest, MatchesHandCount) {
  const auto& f = GetParam();
  MetricsReport r = evaluate_sequence(f.gt, f.hyp, f.name);
  const ClassCounts c = r.overall();
  EXPECT_EQ(c.tp, f.tp);
  EXPECT_EQ(c.fp, f.fp);
  EXPECT_EQ(c.fn, f.fn);
  EXPECT_EQ(c.ids, f.ids);
  EXPECT_NEAR(c.soft_tp, f.soft_tp, 1e-9);
  EXPECT_NEAR(c.motsa(), f.motsa, 1e-9);
  EXPECT_NEAR(c.smotsa(), f.smotsa, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, MetricsFixtureTest, ::testing::ValuesIn(fixtures::metrics_fixtures()),
                         [](const auto& info) {
                           std::string n = info.param.name;
                           for (char& ch : n)
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           return n;
                         });

TEST(MetricsFixtureSuite, HasTwelveDistinctFixtures) {
  auto all = fixtures::metrics_fixtures();
  EXPECT_EQ(all.size(), 12u);
}

TEST(MatchFrame, IdenticalAndEmpty) {
  std::vector<InstanceMask> gt = {instance(rect_mask(6, 6, 0, 0, 2, 3), ClassId::kCar, 1),
                                  instance(rect_mask(6, 6, 3, 3, 6, 6), ClassId::kPedestrian, 2)};
  FrameMatches m = match_frame(gt, gt, std::nullopt);
  ASSERT_EQ(m.pairs.size(), 2u);
  for (const auto& p : m.pairs) {
    EXPECT_EQ(p.gt, p.hyp);
    EXPECT_DOUBLE_EQ(p.iou, 1.0);
  }
  FrameMatches e = match_frame(gt, {}, std::nullopt);
  EXPECT_TRUE(e.pairs.empty());
  EXPECT_EQ(e.missed_gt.size(), 2u);
}

TEST(MatchFrame, OverlappingHypothesesRefused) {
  std::vector<InstanceMask> hyp = {instance(rect_mask(6, 6, 0, 0, 3, 3), ClassId::kCar, 1),
                                   instance(rect_mask(6, 6, 2, 2, 4, 4), ClassId::kCar, 2)};
  try {
    match_frame({}, hyp, std::nullopt);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("overlapping"), std::string::npos);
  }
}

TEST(MatchFrame, IgnoreSuppressionCanBeDisabled) {
  auto f = fixtures::metrics_fixtures()[5];
  MatchOptions opts;
  opts.suppress_ignored = false;
  MetricsReport r = evaluate_sequence(f.gt, f.hyp, "", opts);
  EXPECT_EQ(r.overall().fp, 2);
}

TEST(Evaluate, RejectsSizeMismatch) {
  MotsAnnotations g, h;
  fixtures::fix_add(g, 0, ClassId::kCar, 1, fixtures::fix_row(0, 0, 3));
  h.height = 5;
  h.width = 10;
  EXPECT_THROW(evaluate_sequence(g, h), DataError);
}

TEST(Report, KeyValueHasStableOrder) {
  auto f = fixtures::metrics_fixtures()[2];
  MetricsReport r = evaluate_sequence(f.gt, f.hyp, "0002");
  const std::string kv = r.to_kv();
  EXPECT_EQ(kv.rfind("cars.sMOTSA=0.5\n", 0), 0u);
  EXPECT_NE(kv.find("all.IDS=1\n"), std::string::npos);
  EXPECT_NE(kv.find("seq.0002.cars.MOTSA=0.5\n"), std::string::npos);
  EXPECT_EQ(kv, evaluate_sequence(f.gt, f.hyp, "0002").to_kv());
  EXPECT_NE(r.to_text().find("sMOTSA"), std::string::npos);
}

// Random disjoint masks: rectangles painted in order, later ones on top.
std::vector<InstanceMask> random_frame(std::mt19937_64& rng, int h, int w, int max_objects) {
  std::uniform_int_distribution<int> n_obj(0, max_objects), y(0, h - 1), x(0, w - 1), cls(1, 2);
  std::vector<int> label(h * w, -1);
  const int k = n_obj(rng);
  std::vector<ClassId> classes;
  for (int i = 0; i < k; ++i) {
    int y0 = y(rng), y1 = y(rng), x0 = x(rng), x1 = x(rng);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    for (int yy = y0; yy <= y1; ++yy)
      for (int xx = x0; xx <= x1; ++xx) label[yy * w + xx] = i;
    classes.push_back(static_cast<ClassId>(cls(rng)));
  }
  std::vector<InstanceMask> out;
  for (int i = 0; i < k; ++i) {
    Mask m(h, w);
    for (int p = 0; p < h * w; ++p)
      if (label[p] == i) m.set_linear(p, true);
    if (m.any()) out.push_back(instance(std::move(m), classes[i], i + 1, i + 1));
  }
  return out;
}

TEST(MetricsFuzz, SoftNeverExceedsHardAndRelabelInvariant) {
  std::mt19937_64 rng(99);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 1000; ++t) {
    MotsAnnotations gt, hyp, relabeled;
    gt.height = hyp.height = relabeled.height = 8;
    gt.width = hyp.width = relabeled.width = 8;
    const int frames = 1 + t % 5;
    for (int f = 0; f < frames; ++f) {
      gt.frames[f].instances = random_frame(rng, 8, 8, 4);
      // hypotheses: either independent noise or a perturbed copy of the GT
      auto hf = coin(rng) ? random_frame(rng, 8, 8, 4) : gt.frames[f].instances;
      for (auto& im : hf) {
        if (coin(rng) && im.mask.area() > 1) {
          for (std::size_t p = 0; p < im.mask.size(); ++p)
            if (im.mask[p]) {
              im.mask.set_linear(p, false);
              break;
            }
        }
        im.track_id = 1 + static_cast<int>(rng() % 3);
      }
      // all ids distinct within a frame keep the fuzz meaningful
      for (std::size_t i = 0; i < hf.size(); ++i) hf[i].track_id = *hf[i].track_id * 10 + static_cast<int>(i);
      hyp.frames[f].instances = hf;
      for (auto& im : hf) im.track_id = 1000 - *im.track_id;  // fixed bijection
      relabeled.frames[f].instances = hf;
    }
    MetricsReport r = evaluate_sequence(gt, hyp);
    for (const ClassCounts& c : {r.cars, r.pedestrians, r.overall()}) {
      EXPECT_LE(c.smotsa(), c.motsa() + 1e-12);
      EXPECT_LE(c.motsa(), 1.0);
      EXPECT_LE(c.soft_tp, static_cast<double>(c.tp) + 1e-12);
    }
    long m = 0;
    for (const auto& [f, a] : gt.frames) m += static_cast<long>(a.instances.size());
    EXPECT_EQ(r.overall().num_gt(), m);
    EXPECT_EQ(evaluate_sequence(gt, relabeled).to_kv(), r.to_kv());
  }
}

TEST(MetricsFuzz, PerfectTrackingScoresOne) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    MotsAnnotations gt;
    gt.height = gt.width = 8;
    for (int f = 0; f < 4; ++f) gt.frames[f].instances = random_frame(rng, 8, 8, 3);
    if (!gt.num_instances()) continue;
    MetricsReport r = evaluate_sequence(gt, gt);
    EXPECT_DOUBLE_EQ(r.overall().smotsa(), 1.0);
    EXPECT_DOUBLE_EQ(r.overall().motsa(), 1.0);
    EXPECT_EQ(r.overall().ids, 0);
  }
}

}  // namespace
}  // namespace segtrack
