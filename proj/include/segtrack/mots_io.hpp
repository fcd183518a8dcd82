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

// KITTI MOTS text format: one line per object and frame,
//   <frame> <obj_id> <class_id> <img_height> <img_width> <rle>
// with obj_id = class_id * 1000 + instance number. Class 10 lines are ignore
// regions.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "segtrack/data_model.hpp"

namespace segtrack {

struct MotsRecord {
  int frame = 0;
  int object_id = 0;
  int class_id = 0;
  int height = 0;
  int width = 0;
  std::string rle;
};

MotsRecord parse_mots_line(const std::string& line, const std::string& file, std::size_t line_no);
std::string format_mots_line(int frame, int object_id, int class_id, const Mask& mask);

struct MotsAnnotations {
  int height = 0;  // 0 when the file has no lines
  int width = 0;
  std::map<int, FrameAnnotation> frames;

  std::size_t num_instances() const;
};

struct MotsLoadOptions {
  // GT files must be disjoint per frame; result files are checked later by the evaluator.
  bool require_disjoint = true;
};

MotsAnnotations load_mots_annotations(const std::string& path, const MotsLoadOptions& opts = {});

// Frames come from <image_dir>/NNNNNN.png; every annotated frame must have an image.
Sequence load_mots_sequence(const std::string& annotation_path, const std::string& image_dir);

// class * 1000 + track id; falls back to the instance id when no track is set.
int mots_object_id(const InstanceMask& m);

void write_mots_frame(std::ostream& os, int frame_index, const std::vector<InstanceMask>& instances,
                      const std::optional<Mask>& ignore = std::nullopt);
void write_mots_annotations(const std::string& path, const Sequence& seq);
void write_mots_annotations(const std::string& path, const MotsAnnotations& ann);
// Writes the images of seq into image_dir as NNNNNN.png.
void write_sequence_images(const std::string& image_dir, const Sequence& seq);

std::string frame_image_name(int frame_index);

}  // namespace segtrack
