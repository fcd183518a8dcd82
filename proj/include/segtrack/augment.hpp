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
#include <random>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"

namespace segtrack {

struct InstanceDBEntry {
  Image patch;  // tight bbox crop
  Mask mask;    // same size as patch
  ClassId class_id = ClassId::kPedestrian;
  double lightness = 0.0;
  std::string sequence_id;
  int frame_index = 0;
  int instance_id = 0;
};

struct InstanceDB {
  std::vector<InstanceDBEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

// Mean relative luminance of the masked pixels, channels scaled to [0,1].
double mask_lightness(const Image& image, const Mask& mask);

// One entry per annotated pedestrian occurrence.
InstanceDB build_instance_db(const std::vector<Sequence>& sequences);

struct PasteConfig {
  double p_car = 0.2;
  double p_ped = 0.5;
  double lightness_tol = 0.15;
  double min_cover = 0.2;  // fraction of the host mask hidden by the donor
  double max_cover = 0.7;
  double scale_min = 0.8;  // donor height relative to host height
  double scale_max = 1.25;
  int max_attempts = 20;
  int min_pixels = 10;  // masks cut below this are dropped

  void validate() const;
  KeyValueConfig to_kv() const;
  static PasteConfig from_kv(const KeyValueConfig& kv);
};

struct PasteEvent {
  int host = -1;  // index into the input instances
  ClassId host_class = ClassId::kCar;
  bool fired = false;     // the per-host coin came up
  bool pasted = false;    // a placement was found and applied
  bool fallback = false;  // no donor within the lightness tolerance
  int donor = -1;
  double lightness_diff = 0.0;
  double covered = 0.0;
  int attempts = 0;
};

struct PasteResult {
  Frame frame;
  FrameAnnotation annotation;
  std::vector<PasteEvent> events;
};

PasteResult copy_paste(const Frame& frame, const FrameAnnotation& annotation, const InstanceDB& db,
                       const PasteConfig& config, std::mt19937_64& rng);

}  // namespace segtrack
