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
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace segtrack {

enum class ClassId : int { kBackground = 0, kCar = 1, kPedestrian = 2, kIgnore = 10 };

constexpr int kNumSemanticClasses = 3;  // background, car, pedestrian

const char* class_name(ClassId c);
bool is_object_class(int raw);

// Dense H x W binary grid, row-major.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool empty_grid() const { return bits_.empty(); }

  bool at(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v = true) { bits_[index(y, x)] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set_linear(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t area() const;
  bool any() const;
  bool same_shape(const Mask& o) const { return height_ == o.height_ && width_ == o.width_; }

  std::span<const std::uint8_t> bits() const { return bits_; }

  bool operator==(const Mask& o) const = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// 8-bit RGB, row-major interleaved.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image& o) const = default;
};

struct Frame {
  std::string sequence_id;
  int frame_index = 0;
  Image image;

  int height() const { return image.height; }
  int width() const { return image.width; }
  bool operator==(const Frame& o) const = default;
};

struct InstanceMask {
  Mask mask;
  ClassId class_id = ClassId::kCar;
  int instance_id = 1;
  std::optional<int> track_id;

  bool operator==(const InstanceMask& o) const = default;
};

struct InstanceSegmentation {
  int frame_index = 0;
  std::vector<InstanceMask> instances;
};

// Pixel-extent box: a pixel (x, y) covers [x, x+1) x [y, y+1).
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
};

struct FrameAnnotation {
  std::vector<InstanceMask> instances;
  std::optional<Mask> ignore;
};

// frames[i] and annotations[i] describe the same frame; frame indices strictly increase.
struct Sequence {
  std::string sequence_id;
  int height = 0;
  int width = 0;
  std::vector<Frame> frames;
  std::vector<FrameAnnotation> annotations;

  std::size_t num_instances() const;
};

double mask_iou(const Mask& a, const Mask& b);
double mask_iou(const InstanceMask& a, const InstanceMask& b);
std::size_t intersection_area(const Mask& a, const Mask& b);

Mask mask_union(const Mask& a, const Mask& b);
// a \ b
Mask mask_subtract(const Mask& a, const Mask& b);

// Tight pixel-extent box; mask must be non-empty.
BBox tight_bbox(const Mask& m);
// Scale about the center, then clip to [0,width] x [0,height].
BBox enlarge_bbox(const BBox& b, double factor, int height, int width);

// Throws ContractViolation naming the first overlapping pair.
void check_disjoint(std::span<const InstanceMask> masks);
bool are_disjoint(std::span<const InstanceMask> masks);

// Per-pixel class id (0 background) from disjoint instance masks.
std::vector<std::uint8_t> label_map(std::span<const InstanceMask> masks, int height, int width);

}  // namespace segtrack
