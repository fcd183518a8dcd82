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
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "segtrack/config.hpp"
#include "segtrack/harness.hpp"
#include "segtrack/image_io.hpp"
#include "segtrack/mots_io.hpp"
#include "segtrack/synthetic.hpp"

namespace segtrack {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(SEGTRACK_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("segtrack_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Cli, EvalOfIdenticalFilesIsPerfect) {
  const fs::path d = fresh_dir("eval");
  const Sequence seq = generate_synthetic_sequence(SyntheticConfig::profile("tiny"), 0);
  write_mots_annotations((d / "gt.txt").string(), seq);
  fs::copy_file(d / "gt.txt", d / "res.txt");
  const CliRun r = cli("eval --gt " + (d / "gt.txt").string() + " --res " + (d / "res.txt").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sMOTSA=1.0"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(d / "res.txt.eval.manifest.txt"));
}

TEST(Cli, GenIsReproducibleFromItsManifest) {
  const fs::path d = fresh_dir("gen");
  const CliRun a = cli("gen --profile tiny --seed 7 --out " + (d / "a").string());
  const CliRun b = cli("gen --profile tiny --seed 7 --out " + (d / "b").string());
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(directory_hash((d / "a").string()), directory_hash((d / "b").string()));

  // regenerate from the recorded configuration alone
  const KeyValueConfig m = RunManifest::read((d / "a/manifest.txt").string());
  std::ofstream cfg(d / "from_manifest.cfg");
  for (const auto& [k, v] : m.values())
    if (k.rfind("config.", 0) == 0) cfg << k.substr(7) << "=" << v << "\n";
  cfg.close();
  const CliRun c = cli("gen --profile small --config " + (d / "from_manifest.cfg").string() + " --out " +
                    (d / "c").string());
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(directory_hash((d / "c").string()), directory_hash((d / "a").string()));
  EXPECT_EQ(m.get_string("result.dataset_sha1", ""), directory_hash((d / "a").string()));

  const CliRun other = cli("gen --profile tiny --seed 8 --out " + (d / "o").string());
  EXPECT_NE(other.out, a.out);
}

TEST(Cli, ExitCodes) {
  const fs::path d = fresh_dir("codes");
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("gen --out " + (d / "x").string() + " --no-such-flag").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("gen --out " + (d / "x").string() + " --set gen.height=-4").code, 2);
  EXPECT_EQ(cli("train-seg --data " + d.string() + " --out m.ckpt --set segtrain.epochz=1").code, 2);
  // a directory without split.txt is a data error
  EXPECT_EQ(cli("train-seg --data " + d.string() + " --out " + (d / "m.ckpt").string()).code, 3);
  std::ofstream(d / "bad.txt") << "0 1001 1 4 4 not-rle\n";
  EXPECT_EQ(cli("eval --gt " + (d / "bad.txt").string() + " --res " + (d / "bad.txt").string()).code, 3);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, RenderAndPastePreview) {
  const fs::path d = fresh_dir("render");
  ASSERT_EQ(cli("gen --profile tiny --seed 3 --out " + (d / "data").string()).code, 0);
  const Dataset ds = load_dataset((d / "data").string());
  const Sequence& seq = ds.train.front();
  ASSERT_EQ(cli("render --data " + (d / "data").string() + " --sequence " + seq.sequence_id + " --out " +
                (d / "overlay").string())
                .code,
            0);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Image out = read_png((d / "overlay" / frame_image_name(seq.frames[t].frame_index)).string());
    const Image& in = seq.frames[t].image;
    ASSERT_EQ(out.height, in.height);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        bool inside = false;
        for (const auto& im : seq.annotations[t].instances) inside |= im.mask.at(y, x);
        if (!inside)
          for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(y, x, c), in.at(y, x, c));
      }
  }
  EXPECT_EQ(cli("render --data " + (d / "data").string() + " --sequence nope --out " + (d / "o2").string()).code, 3);

  const CliRun p = cli("paste-preview --data " + (d / "data").string() + " --count 4 --out " + (d / "paste").string());
  EXPECT_EQ(p.code, 0);
  EXPECT_TRUE(fs::exists(d / "paste/0003_composite.png"));
  EXPECT_TRUE(fs::exists(d / "paste/manifest.txt"));
  const MotsAnnotations labels = load_mots_annotations((d / "paste/labels.txt").string());
  EXPECT_LE(labels.frames.size(), 4u);
}

}  // namespace
}  // namespace segtrack
