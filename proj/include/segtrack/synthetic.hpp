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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"

namespace segtrack {

// Moving textured shapes: cars are rectangles, pedestrians are ellipses.
struct SyntheticConfig {
  int height = 64;
  int width = 64;
  int num_sequences = 20;
  int val_sequences = 4;  // the last ones are held out
  int sequence_length = 40;
  int min_objects = 2;
  int max_objects = 4;
  double pedestrian_fraction = 0.5;
  std::vector<int> car_size = {14, 22, 8, 12};  // width min/max, height min/max
  std::vector<int> ped_size = {6, 9, 13, 19};
  double min_speed = 0.3;  // px/frame
  double max_speed = 1.5;
  double occlusion_rate = 0.35;      // fraction of objects put on a crossing course
  double similar_color_rate = 0.25;  // fraction of objects reusing another object's color
  double texture_noise = 14.0;       // amplitude of the per-object texture (8-bit units)
  double sensor_noise = 3.0;         // per-frame pixel noise
  int min_visible = 16;  // smaller visible fragments become ignore regions
  std::uint64_t seed = 7;

  void validate() const;
  KeyValueConfig to_kv() const;
  static SyntheticConfig from_kv(const KeyValueConfig& kv);
  // "small" (64x64, 20 x 40 frames) or "tiny" (32x32, 3 x 8 frames, for tests).
  static SyntheticConfig profile(const std::string& name);
};

Sequence generate_synthetic_sequence(const SyntheticConfig& config, int sequence_index);

struct Dataset {
  std::vector<Sequence> train;
  std::vector<Sequence> val;
};

std::string sequence_name(int index);

// Writes instances_txt/, images/, split.txt and synthetic.cfg under dir.
void write_synthetic_dataset(const SyntheticConfig& config, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace segtrack
