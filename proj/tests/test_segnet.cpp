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

#include "segtrack/errors.hpp"
#include "segtrack/seg_losses.hpp"
#include "segtrack/segnet.hpp"
#include "test_util.hpp"

namespace segtrack {
namespace {

using testing::rect_mask;

SegNetConfig tiny_config(SeedMode mode, std::uint64_t seed = 7) {
  SegNetConfig c;
  c.seed_mode = mode;
  c.encoder_widths = {3, 4, 4, 5, 5};
  c.decoder_widths = {4, 4, 3, 3};
  c.init_seed = seed;
  return c;
}

Frame random_frame(int h, int w, std::mt19937_64& rng) {
  Frame f;
  f.sequence_id = "t";
  f.image = testing::random_image(h, w, rng);
  return f;
}

TEST(UpsampleInput, FactorOneIsIdentity) {
  std::mt19937_64 rng(1);
  Frame f = random_frame(5, 7, rng);
  EXPECT_EQ(upsample_input(f, 1), f);
  EXPECT_THROW(upsample_input(f, 0), ContractViolation);
}

TEST(UpsampleInput, ConstantImageStaysConstant) {
  Frame f;
  f.image = Image(4, 4);
  for (auto& v : f.image.rgb) v = 137;
  Frame u = upsample_input(f, 2);
  ASSERT_EQ(u.image.height, 8);
  ASSERT_EQ(u.image.width, 8);
  for (auto v : u.image.rgb) EXPECT_EQ(v, 137);
}

TEST(UpsampleInput, BilinearInterior) {
  // 1x2 ramp 0 -> 200: sample points at 1/4 and 3/4 between the two source pixels.
  Frame f;
  f.image = Image(1, 2);
  for (int c = 0; c < 3; ++c) f.image.at(0, 1, c) = 200;
  Frame u = upsample_input(f, 2);
  EXPECT_EQ(u.image.at(0, 0, 0), 0);
  EXPECT_EQ(u.image.at(0, 1, 0), 50);
  EXPECT_EQ(u.image.at(0, 2, 0), 150);
  EXPECT_EQ(u.image.at(0, 3, 0), 200);
}

TEST(UpsampleMasks, DisjointnessPreservedAndDownsampleInverts) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    Mask a = testing::random_mask(9, 11, 0.3, rng);
    Mask b = mask_subtract(testing::random_mask(9, 11, 0.3, rng), a);
    if (!a.any() || !b.any()) continue;
    FrameAnnotation ann;
    ann.instances = {testing::instance(a, ClassId::kCar, 1), testing::instance(b, ClassId::kPedestrian, 2)};
    FrameAnnotation up = upsample_annotation(ann, 2);
    EXPECT_TRUE(are_disjoint(up.instances));
    EXPECT_EQ(up.instances[0].mask.area(), 4 * a.area());
    auto down = downsample_instances(up.instances, 2);
    ASSERT_EQ(down.size(), 2u);
    EXPECT_EQ(down[0].mask, a);
    EXPECT_EQ(down[1].mask, b);
  }
}

TEST(DownsampleInstances, MajorityVoteKeepsDisjoint) {
  // Each 2x2 block split 2/2 between two instances goes to the first one.
  Mask a = rect_mask(4, 4, 0, 0, 4, 1);
  Mask b = rect_mask(4, 4, 0, 1, 4, 2);
  auto down = downsample_instances({testing::instance(a, ClassId::kCar, 1), testing::instance(b, ClassId::kCar, 2)}, 2);
  ASSERT_EQ(down.size(), 1u);
  EXPECT_EQ(down[0].instance_id, 1);
  EXPECT_EQ(down[0].mask.area(), 2u);
}

TEST(SegNetConfigTest, ValidationAndRoundTrip) {
  SegNetConfig c;
  c.focal_gamma = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SegNetConfig{};
  c.upsample_factor = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SegNetConfig{};
  c.seed_fg_weight = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(SeedMode::kGaussian);
  c.focal_gamma = 1.5;
  SegNetConfig back = SegNetConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.to_kv().to_text(), c.to_kv().to_text());
  EXPECT_EQ(back.seed_mode, SeedMode::kGaussian);
  EXPECT_EQ(back.encoder_widths, c.encoder_widths);
}

TEST(SegNetForward, RejectsIndivisibleInput) {
  SegNet<float> net(tiny_config(SeedMode::kSemantic));
  std::mt19937_64 rng(2);
  EXPECT_THROW(net.forward(testing::random_image(20, 16, rng)), PaddingRequired);
  EXPECT_NO_THROW(net.forward(testing::random_image(32, 16, rng)));
}

TEST(SegNetForward, RangesHoldForRandomWeights) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 12; ++t) {
    const SeedMode mode = t % 2 ? SeedMode::kGaussian : SeedMode::kSemantic;
    SegNet<float> net(tiny_config(mode, 100 + t));
    // Blow up some weights so the activations saturate.
    std::normal_distribution<float> n(0.0f, t < 6 ? 0.3f : 3.0f);
    for (auto& p : net.params().all())
      for (auto& v : p.value) v += n(rng);
    DenseMapStack out = net.forward(testing::random_image(16, 32, rng));
    EXPECT_NO_THROW(out.validate());
    for (double s : out.seed) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    for (double s : out.sigma) EXPECT_GT(s, 0.0);
    for (double o : out.offset) EXPECT_LE(std::abs(o), out.offset_bound);
    if (mode == SeedMode::kSemantic) {
      for (std::size_t i = 0; i < out.pixels(); ++i)
        EXPECT_NEAR(out.seed_at(0, i) + out.seed_at(1, i) + out.seed_at(2, i), 1.0, 1e-9);
    }
  }
}

TEST(SegNetForward, Deterministic) {
  std::mt19937_64 rng(4);
  Image img = testing::random_image(16, 16, rng);
  SegNet<float> a(tiny_config(SeedMode::kSemantic, 9));
  SegNet<float> b(tiny_config(SeedMode::kSemantic, 9));
  DenseMapStack x = a.forward(img), y = a.forward(img), z = b.forward(img);
  EXPECT_EQ(x.seed, y.seed);
  EXPECT_EQ(x.sigma, y.sigma);
  EXPECT_EQ(x.offset, y.offset);
  EXPECT_EQ(x.seed, z.seed);
  EXPECT_EQ(x.offset, z.offset);
}

TEST(SegNetForward, EmbeddingIsCoordinatePlusOffset) {
  std::mt19937_64 rng(6);
  SegNet<double> net(tiny_config(SeedMode::kSemantic));
  DenseMapStack out = net.forward(testing::random_image(16, 16, rng));
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    EXPECT_DOUBLE_EQ(out.embed_x(i), double(i % 16) + out.offset[i]);
    EXPECT_DOUBLE_EQ(out.embed_y(i), double(i / 16) + out.offset[out.pixels() + i]);
  }
}

enum class LossKind { kFocal, kGaussian, kInstance };

struct GradCase {
  LossKind loss;
  SeedMode mode;
};

class SegNetGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(SegNetGradient, MatchesFiniteDifferences) {
  const GradCase gc = GetParam();
  std::mt19937_64 rng(11);
  SegNetConfig cfg = tiny_config(gc.mode, 21);
  cfg.offset_bound_frac = 0.2;
  SegNet<double> net(cfg);
  Image img = testing::random_image(16, 16, rng);
  std::vector<InstanceMask> gt = {testing::instance(rect_mask(16, 16, 2, 2, 8, 7), ClassId::kCar, 1),
                                  testing::instance(rect_mask(16, 16, 9, 8, 15, 12), ClassId::kPedestrian, 2)};
  Mask ignore = rect_mask(16, 16, 0, 13, 3, 16);
  LabelGrid labels = make_label_grid(gt, 16, 16, ignore);

  auto loss_of = [&](const DenseMapStack& out, MapGrads* g) {
    switch (gc.loss) {
      case LossKind::kFocal:
        return focal_seed_loss(out, labels, 2.0, g);
      case LossKind::kGaussian:
        return gaussian_seed_loss(out, gt, GaussianSeedOptions{}, &ignore, g);
      case LossKind::kInstance:
        return instance_cluster_loss(out, gt, ClusterLossOptions{}, &ignore, g);
    }
    return 0.0;
  };

  SegNet<double>::Trace tr;
  DenseMapStack out = net.forward(img, &tr);
  MapGrads g(out);
  loss_of(out, &g);
  net.params().zero_grad();
  net.backward(tr, out, g);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0, failed = 0;
  for (auto& p : net.params().all()) {
    // two random entries per tensor; covers every layer of both decoders and the encoder
    for (int k = 0; k < 2; ++k) {
      const std::size_t j = static_cast<std::size_t>(u(rng) * p.size()) % p.size();
      const double fd = testing::central_difference(
          [&] { return loss_of(net.forward(img), nullptr); }, p.value[j], 1e-6);
      const double an = p.grad[j];
      ++checked;
      if (!testing::grad_close(an, fd)) {
        ++failed;
        ADD_FAILURE() << p.name << "[" << j << "] analytic " << an << " numeric " << fd;
      }
    }
  }
  EXPECT_GT(checked, 40);
  EXPECT_EQ(failed, 0);
}

INSTANTIATE_TEST_SUITE_P(Losses, SegNetGradient,
                         ::testing::Values(GradCase{LossKind::kFocal, SeedMode::kSemantic},
                                           GradCase{LossKind::kGaussian, SeedMode::kGaussian},
                                           GradCase{LossKind::kInstance, SeedMode::kSemantic}),
                         [](const auto& info) {
                           switch (info.param.loss) {
                             case LossKind::kFocal: return std::string("Focal");
                             case LossKind::kGaussian: return std::string("Gaussian");
                             default: return std::string("Instance");
                           }
                         });

TEST(SegNetParams, CopyBetweenPrecisions) {
  SegNet<double> d(tiny_config(SeedMode::kSemantic, 3));
  SegNet<float> f(tiny_config(SeedMode::kSemantic, 99));
  copy_params(f.params(), d.params());
  std::mt19937_64 rng(8);
  Image img = testing::random_image(16, 16, rng);
  DenseMapStack a = d.forward(img), b = f.forward(img);
  for (std::size_t i = 0; i < a.seed.size(); ++i) EXPECT_NEAR(a.seed[i], b.seed[i], 1e-4);
  SegNet<float> other(tiny_config(SeedMode::kGaussian, 3));
  EXPECT_THROW(copy_params(other.params(), d.params()), ContractViolation);
}

}  // namespace
}  // namespace segtrack
