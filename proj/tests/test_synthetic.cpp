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

#include <filesystem>
#include <map>
#include <set>

#include "segtrack/errors.hpp"
#include "segtrack/synthetic.hpp"

namespace segtrack {
namespace {

namespace fs = std::filesystem;

TEST(SyntheticConfigTest, ProfilesAndValidation) {
  EXPECT_NO_THROW(SyntheticConfig::profile("small").validate());
  EXPECT_EQ(SyntheticConfig::profile("tiny").height, 32);
  EXPECT_THROW(SyntheticConfig::profile("huge"), ConfigError);
  SyntheticConfig c;
  c.val_sequences = c.num_sequences;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.car_size = {30, 80, 8, 12};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.seed = 123456789012345ULL;
  c.occlusion_rate = 0.1;
  SyntheticConfig d = SyntheticConfig::from_kv(c.to_kv());
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_DOUBLE_EQ(d.occlusion_rate, 0.1);
  EXPECT_EQ(d.car_size, c.car_size);
}

TEST(Synthetic, SameSeedSameSequence) {
  SyntheticConfig c = SyntheticConfig::profile("tiny");
  Sequence a = generate_synthetic_sequence(c, 1), b = generate_synthetic_sequence(c, 1);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    EXPECT_EQ(a.frames[t], b.frames[t]);
    EXPECT_EQ(a.annotations[t].instances, b.annotations[t].instances);
  }
  Sequence other = generate_synthetic_sequence(c, 2);
  EXPECT_FALSE(other.frames[0] == a.frames[0]);
}

TEST(Synthetic, SingleUnoccludedObjectKeepsItsArea) {
  SyntheticConfig c = SyntheticConfig::profile("small");
  c.min_objects = c.max_objects = 1;
  c.occlusion_rate = 0.0;
  for (int s = 0; s < 10; ++s) {
    Sequence seq = generate_synthetic_sequence(c, s);
    ASSERT_EQ(seq.annotations[0].instances.size(), 1u);
    const std::size_t area = seq.annotations[0].instances[0].mask.area();
    for (const auto& a : seq.annotations) {
      ASSERT_EQ(a.instances.size(), 1u);
      EXPECT_EQ(a.instances[0].mask.area(), area);
      EXPECT_EQ(a.instances[0].track_id, 1);
      EXPECT_FALSE(a.ignore.has_value());
    }
  }
}

TEST(Synthetic, AnnotationInvariants) {
  SyntheticConfig c = SyntheticConfig::profile("small");
  c.max_objects = 6;
  c.occlusion_rate = 0.8;
  int occlusions = 0;
  for (int s = 0; s < 8; ++s) {
    Sequence seq = generate_synthetic_sequence(c, s);
    ASSERT_EQ(static_cast<int>(seq.frames.size()), c.sequence_length);
    std::map<int, ClassId> class_of;
    std::map<int, std::size_t> max_area;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      const auto& a = seq.annotations[t];
      EXPECT_EQ(seq.frames[t].frame_index, static_cast<int>(t));
      EXPECT_TRUE(are_disjoint(a.instances));
      std::set<int> ids;
      for (const auto& im : a.instances) {
        ASSERT_TRUE(im.track_id.has_value());
        EXPECT_TRUE(ids.insert(*im.track_id).second);
        EXPECT_EQ(im.instance_id, static_cast<int>(im.class_id) * 1000 + *im.track_id);
        EXPECT_GE(im.mask.area(), static_cast<std::size_t>(c.min_visible));
        auto [it, fresh] = class_of.emplace(*im.track_id, im.class_id);
        EXPECT_EQ(it->second, im.class_id);  // a track never changes class
        max_area[*im.track_id] = std::max(max_area[*im.track_id], im.mask.area());
        if (a.ignore) {
          EXPECT_EQ(intersection_area(im.mask, *a.ignore), 0u);
        }
      }
    }
    for (std::size_t t = 0; t < seq.frames.size(); ++t)
      for (const auto& im : seq.annotations[t].instances) occlusions += im.mask.area() < max_area[*im.track_id];
  }
  EXPECT_GT(occlusions, 0);
}

TEST(Synthetic, WriteThenLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "segtrack_test_synth";
  fs::remove_all(dir);
  SyntheticConfig c = SyntheticConfig::profile("tiny");
  write_synthetic_dataset(c, dir.string());
  EXPECT_TRUE(fs::exists(dir / "synthetic.cfg"));
  Dataset ds = load_dataset(dir.string());
  ASSERT_EQ(ds.train.size(), 2u);
  ASSERT_EQ(ds.val.size(), 1u);
  EXPECT_EQ(ds.val[0].sequence_id, sequence_name(2));
  for (int s = 0; s < 3; ++s) {
    const Sequence& got = s < 2 ? ds.train[s] : ds.val[0];
    Sequence want = generate_synthetic_sequence(c, s);
    ASSERT_EQ(got.frames.size(), want.frames.size());
    for (std::size_t t = 0; t < want.frames.size(); ++t) {
      EXPECT_EQ(got.frames[t].image, want.frames[t].image);
      EXPECT_EQ(got.annotations[t].instances, want.annotations[t].instances);
      EXPECT_EQ(got.annotations[t].ignore, want.annotations[t].ignore);
    }
  }
  fs::remove_all(dir);
}

TEST(Synthetic, MissingSplitIsDataError) {
  const fs::path dir = fs::temp_directory_path() / "segtrack_test_nosplit";
  fs::create_directories(dir);
  EXPECT_THROW(load_dataset(dir.string()), DataError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace segtrack
