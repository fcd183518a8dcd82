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

#include "segtrack/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "segtrack/errors.hpp"
#include "test_util.hpp"

namespace segtrack {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("segtrack_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

TEST(Hashing, KnownVectors) {
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Hashing, DirectoryHashTracksContentNotCreationOrder) {
  const fs::path a = fresh_dir("hash_a"), b = fresh_dir("hash_b");
  write_text(a / "x.txt", "1");
  write_text(a / "sub/y.txt", "2");
  write_text(b / "sub/y.txt", "2");
  write_text(b / "x.txt", "1");
  EXPECT_EQ(directory_hash(a.string()), directory_hash(b.string()));
  write_text(b / "manifest.txt", "ignored");
  write_text(b / "out.eval.manifest.txt", "ignored");
  EXPECT_EQ(directory_hash(a.string()), directory_hash(b.string()));
  write_text(b / "x.txt", "3");
  EXPECT_NE(directory_hash(a.string()), directory_hash(b.string()));
  EXPECT_THROW(directory_hash((a / "missing").string()), DataError);
}

TEST(Ablation, StandardRows) {
  const auto rows = standard_ablation_rows();
  ASSERT_EQ(rows.size(), 5u);
  const std::vector<std::string> names = {"baseline", "+2X", "+Sem", "+CP", "+Sep"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].name(), names[i]);
    EXPECT_EQ(parse_row_name(names[i]), rows[i]);
    EXPECT_EQ(AblationSpec::parse(rows[i].flags()), rows[i]);
  }
  EXPECT_EQ(AblationSpec::parse("sem,2x").name(), "+Sem");
  EXPECT_EQ(AblationSpec::parse("cp").name(), "cp");
  EXPECT_THROW(AblationSpec::parse("2x,fast"), ConfigError);
}

TEST(Ablation, EachFlagSetIsOneConfiguration) {
  const ExperimentConfig base = ExperimentConfig::defaults();
  EXPECT_EQ(base.spec(), standard_ablation_rows().back());
  std::set<std::string> configs;
  for (int bits = 0; bits < 16; ++bits) {
    AblationSpec s{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
    const ExperimentConfig c = base.with(s);
    EXPECT_EQ(c.spec(), s);
    EXPECT_EQ(c.with(s).to_kv().to_text(), c.to_kv().to_text());
    EXPECT_EQ(c.pipeline_for(c.seg.upsample_factor).cluster.min_pixels,
              c.min_area * c.seg.upsample_factor * c.seg.upsample_factor);
    configs.insert(c.to_kv().to_text());
  }
  EXPECT_EQ(configs.size(), 16u);
}

TEST(ExperimentConfigTest, KeyValueRoundTripAndErrors) {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.segtrain.epochs = 7;
  c.embtrain.S_p = 3;
  c.min_area = 20;
  c.pipeline.cluster.assign_threshold = 0.25;
  const ExperimentConfig back = ExperimentConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.to_kv().to_text(), c.to_kv().to_text());
  EXPECT_EQ(back.pipeline_for(2).cluster.min_pixels, 80);

  KeyValueConfig typo;
  typo.set("segtrain.epoch", 3);
  EXPECT_THROW(ExperimentConfig::from_kv(typo), ConfigError);
  KeyValueConfig inconsistent;
  inconsistent.set("cluster.min_pixels", 5);
  EXPECT_THROW(ExperimentConfig::from_kv(inconsistent), ConfigError);
  KeyValueConfig bad;
  bad.set("embtrain.stage_order", "a,f,e,p");
  EXPECT_THROW(ExperimentConfig::from_kv(bad), ConfigError);

  KeyValueConfig gate;
  gate.set("track.max_distance", 1.5);
  const ExperimentConfig fixed = ExperimentConfig::from_kv(gate);
  EXPECT_FALSE(fixed.calibrate_gate);
  EXPECT_DOUBLE_EQ(fixed.pipeline.tracker.max_distance, 1.5);
}

TEST(Manifest, TextAndReadBack) {
  RunManifest m;
  m.command = "segtrack gen --seed 3";
  m.seed = 3;
  m.config.set("gen.seed", 3);
  const fs::path dir = fresh_dir("manifest");
  write_text(dir / "in.txt", "hello\n");
  m.add_input_file("input", (dir / "in.txt").string());
  m.results.set("score", 0.5);
  m.write((dir / "manifest.txt").string());
  const KeyValueConfig kv = RunManifest::read((dir / "manifest.txt").string());
  EXPECT_EQ(kv.get_string("manifest.command", ""), m.command);
  EXPECT_EQ(kv.get_string("manifest.config_sha1", ""), sha1_hex("gen.seed=3\n"));
  EXPECT_EQ(kv.get_int("manifest.seed", 0), 3);
  EXPECT_EQ(kv.get_string("input.input", ""), (dir / "in.txt").string() + " ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(kv.get_int("config.gen.seed", 0), 3);
  EXPECT_DOUBLE_EQ(kv.get_double("result.score", 0), 0.5);
}

TEST(Overlay, NeverDrawsOutsideMasks) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const int h = 12 + t % 7, w = 9 + t % 5;
    Image img = testing::random_image(h, w, rng);
    std::vector<InstanceMask> inst;
    Mask any(h, w);
    for (int k = 0; k < 1 + t % 4; ++k) {
      Mask m = testing::random_mask(h, w, 0.2, rng);
      any = mask_union(any, m);
      inst.push_back(testing::instance(std::move(m), k % 2 ? ClassId::kCar : ClassId::kPedestrian, k + 1, k + 7));
    }
    const Image out = render_overlay(img, inst, 0.5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (!any.at(y, x))
          for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(y, x, c), img.at(y, x, c));
    EXPECT_EQ(render_overlay(img, inst, 0.0), img);
  }
  Image img(4, 4);
  std::vector<InstanceMask> wrong = {testing::instance(Mask(3, 4), ClassId::kCar, 1)};
  EXPECT_THROW(render_overlay(img, wrong), ContractViolation);
  EXPECT_THROW(render_overlay(img, {}, 1.5), ContractViolation);
}

ExperimentConfig quick_config() {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.segtrain.epochs = 1;
  c.embtrain.iterations = 5;
  c.embtrain.D = 2;
  c.embtrain.clouds.num_fg = 40;
  c.embtrain.clouds.num_env = 20;
  c.pipeline.clouds = c.embtrain.clouds;
  c.gate_pairs = 20;
  c.min_area = 6;
  return c;
}

TEST(RunAblation, SingleRowAndPartialResultsOnFailure) {
  const fs::path root = fresh_dir("ablation");
  const std::string data = (root / "data").string();
  write_synthetic_dataset(SyntheticConfig::profile("tiny"), data);
  const ExperimentConfig cfg = quick_config();
  EXPECT_THROW(run_ablation(data, {}, cfg, (root / "none").string(), "", {}), ConfigError);

  const AblationTable one = run_ablation(data, {AblationSpec{}}, cfg, (root / "one").string(), "", {});
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(one.rows[0].spec.name(), "baseline");
  EXPECT_LE(one.rows[0].report.overall().smotsa(), one.rows[0].report.overall().motsa() + 1e-12);
  const KeyValueConfig kv = KeyValueConfig::load((root / "one/ablation.kv").string());
  EXPECT_EQ(kv.get_int("rows", 0), 1);
  EXPECT_EQ(kv.get_string("row.1.name", ""), "baseline");

  // a corrupt cache entry makes the second row fail after the first is saved
  const std::string cache = (root / "cache").string();
  const ExperimentConfig second = cfg.with(parse_row_name("+2X"));
  write_text(fs::path(cache) / ("segnet-" + seg_cache_key(directory_hash(data), second) + ".ckpt"), "garbage\n");
  EXPECT_THROW(run_ablation(data, {AblationSpec{}, parse_row_name("+2X")}, cfg, (root / "partial").string(), cache, {}),
               DataError);
  const KeyValueConfig partial = KeyValueConfig::load((root / "partial/ablation.kv").string());
  EXPECT_EQ(partial.get_int("rows", 0), 1);
  EXPECT_NE(partial.get_string("failed", "").find("+2X"), std::string::npos);
}

TEST(ModelCache, SecondRequestLoadsIdenticalWeights) {
  const fs::path root = fresh_dir("cache");
  const Dataset ds = [&] {
    write_synthetic_dataset(SyntheticConfig::profile("tiny"), (root / "data").string());
    return load_dataset((root / "data").string());
  }();
  const ExperimentConfig cfg = quick_config().with(AblationSpec{});
  bool hit = true;
  SegNet<float> a = cached_segnet((root / "c").string(), "h", cfg, ds.train, {}, &hit);
  EXPECT_FALSE(hit);
  SegNet<float> b = cached_segnet((root / "c").string(), "h", cfg, ds.train, {}, &hit);
  EXPECT_TRUE(hit);
  for (std::size_t k = 0; k < a.params().all().size(); ++k)
    EXPECT_EQ(a.params().all()[k].value, b.params().all()[k].value);
  EmbedModel e1 = cached_embednet((root / "c").string(), "h", cfg, ds.train, {}, &hit);
  EXPECT_FALSE(hit);
  EmbedModel e2 = cached_embednet((root / "c").string(), "h", cfg, ds.train, {}, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(e1.gate, e2.gate);
  ASSERT_EQ(e2.stages.size(), e1.stages.size());
  EXPECT_EQ(e2.stages[0].S, e1.stages[0].S);
  EXPECT_NE(seg_cache_key("h", cfg), seg_cache_key("other", cfg));
  EXPECT_NE(embed_cache_key("h", cfg), embed_cache_key("h", cfg.with(parse_row_name("+Sep"))));
}

}  // namespace
}  // namespace segtrack
