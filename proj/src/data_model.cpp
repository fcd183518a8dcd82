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

#include "segtrack/data_model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "segtrack/errors.hpp"

namespace segtrack {

const char* class_name(ClassId c) {
  switch (c) {
    case ClassId::kBackground: return "background";
    case ClassId::kCar: return "car";
    case ClassId::kPedestrian: return "pedestrian";
    case ClassId::kIgnore: return "ignore";
  }
  return "unknown";
}

bool is_object_class(int raw) {
  return raw == static_cast<int>(ClassId::kCar) || raw == static_cast<int>(ClassId::kPedestrian);
}

Mask::Mask(int height, int width) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ContractViolation("Mask: negative dimensions");
  bits_.assign(static_cast<std::size_t>(height) * width, 0);
}

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool Mask::any() const {
  return std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t Sequence::num_instances() const {
  std::size_t n = 0;
  for (const auto& a : annotations) n += a.instances.size();
  return n;
}

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* op) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << op << ": mask dimensions differ (" << a.height() << "x" << a.width() << " vs "
       << b.height() << "x" << b.width() << ")";
    throw ContractViolation(os.str());
  }
}

}  // namespace

std::size_t intersection_area(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "intersection_area");
  auto ab = a.bits();
  auto bb = b.bits();
  std::size_t n = 0;
  for (std::size_t i = 0; i < ab.size(); ++i) n += (ab[i] & bb[i]);
  return n;
}

double mask_iou(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_iou");
  auto ab = a.bits();
  auto bb = b.bits();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += (ab[i] & bb[i]);
    uni += (ab[i] | bb[i]);
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_iou(const InstanceMask& a, const InstanceMask& b) { return mask_iou(a.mask, b.mask); }

Mask mask_union(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_union");
  Mask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.set_linear(i, a[i] || b[i]);
  return out;
}

Mask mask_subtract(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_subtract");
  Mask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.set_linear(i, a[i] && !b[i]);
  return out;
}

BBox tight_bbox(const Mask& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw ContractViolation("tight_bbox: empty mask");
  return BBox{double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
}

BBox enlarge_bbox(const BBox& b, double factor, int height, int width) {
  const double cx = b.center_x(), cy = b.center_y();
  const double hw = 0.5 * b.width() * factor, hh = 0.5 * b.height() * factor;
  BBox out{cx - hw, cy - hh, cx + hw, cy + hh};
  out.x_min = std::clamp(out.x_min, 0.0, double(width));
  out.x_max = std::clamp(out.x_max, 0.0, double(width));
  out.y_min = std::clamp(out.y_min, 0.0, double(height));
  out.y_max = std::clamp(out.y_max, 0.0, double(height));
  return out;
}

bool are_disjoint(std::span<const InstanceMask> masks) {
  if (masks.empty()) return true;
  const Mask& first = masks.front().mask;
  std::vector<std::uint8_t> seen(first.size(), 0);
  for (const auto& im : masks) {
    if (!im.mask.same_shape(first)) return false;
    auto bits = im.mask.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i]) continue;
      if (seen[i]) return false;
      seen[i] = 1;
    }
  }
  return true;
}

void check_disjoint(std::span<const InstanceMask> masks) {
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t j = i + 1; j < masks.size(); ++j) {
      const std::size_t n = intersection_area(masks[i].mask, masks[j].mask);
      if (n > 0) {
        std::ostringstream os;
        os << "masks of instances " << masks[i].instance_id << " and " << masks[j].instance_id
           << " overlap in " << n << " pixels";
        throw ContractViolation(os.str());
      }
    }
  }
}

std::vector<std::uint8_t> label_map(std::span<const InstanceMask> masks, int height, int width) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(height) * width, 0);
  for (const auto& im : masks) {
    if (im.mask.height() != height || im.mask.width() != width)
      throw ContractViolation("label_map: mask dimensions differ from image");
    auto bits = im.mask.bits();
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) labels[i] = static_cast<std::uint8_t>(im.class_id);
  }
  return labels;
}

}  // namespace segtrack
