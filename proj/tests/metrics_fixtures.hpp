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

// Hand-counted micro-sequences for the MOTS metrics. Masks live on a 4x10
// grid; each fixture lists the counts worked out by hand.

#include <string>
#include <vector>

#include "segtrack/metrics.hpp"

namespace segtrack::fixtures {

struct MetricsFixture {
  std::string name;
  MotsAnnotations gt, hyp;
  long tp, fp, fn, ids;
  double soft_tp;
  double motsa, smotsa;
};

inline constexpr int kFixH = 4, kFixW = 10;

// Pixels (row, col) listed explicitly so overlaps can be counted by eye.
inline Mask fix_mask(std::initializer_list<std::pair<int, int>> px) {
  Mask m(kFixH, kFixW);
  for (auto [y, x] : px) m.set(y, x);
  return m;
}

inline Mask fix_row(int row, int x0, int x1) {
  Mask m(kFixH, kFixW);
  for (int x = x0; x < x1; ++x) m.set(row, x);
  return m;
}

inline void fix_add(MotsAnnotations& a, int frame, ClassId c, int id, Mask m) {
  a.height = kFixH;
  a.width = kFixW;
  InstanceMask im;
  im.mask = std::move(m);
  im.class_id = c;
  im.instance_id = static_cast<int>(c) * 1000 + id;
  im.track_id = id;
  a.frames[frame].instances.push_back(std::move(im));
}

inline std::vector<MetricsFixture> metrics_fixtures() {
  std::vector<MetricsFixture> out;
  const ClassId car = ClassId::kCar, ped = ClassId::kPedestrian;
  {
    MetricsFixture f{"perfect_three_frames", {}, {}, 3, 0, 0, 0, 3.0, 1.0, 1.0};
    for (int t = 0; t < 3; ++t) {
      fix_add(f.gt, t, car, 1, fix_row(0, t, t + 4));
      fix_add(f.hyp, t, car, 7, fix_row(0, t, t + 4));
    }
    out.push_back(std::move(f));
  }
  {
    MetricsFixture f{"empty_hypothesis", {}, {}, 0, 0, 2, 0, 0.0, 0.0, 0.0};
    fix_add(f.gt, 0, car, 1, fix_row(0, 0, 4));
    fix_add(f.gt, 0, ped, 2, fix_row(2, 0, 4));
    out.push_back(std::move(f));
  }
  {
    // id swap on the second frame: TP=2, IDS=1, MOTSA=(2-0-1)/2
    MetricsFixture f{"two_frame_id_swap", {}, {}, 2, 0, 0, 1, 2.0, 0.5, 0.5};
    fix_add(f.gt, 0, car, 1, fix_row(1, 0, 5));
    fix_add(f.gt, 1, car, 1, fix_row(1, 1, 6));
    fix_add(f.hyp, 0, car, 3, fix_row(1, 0, 5));
    fix_add(f.hyp, 1, car, 4, fix_row(1, 1, 6));
    out.push_back(std::move(f));
  }
  {
    // gt A 5 px, hyp covers 3 of them: IoU 3/5 = 0.6 (match)
    // gt B 5 px, hyp covers 2 of them: IoU 2/5 = 0.4 (FN + FP)
    MetricsFixture f{"iou_0.6_and_0.4", {}, {}, 1, 1, 1, 0, 0.6, 0.0, -0.2};
    fix_add(f.gt, 0, car, 1, fix_row(0, 0, 5));
    fix_add(f.gt, 0, car, 2, fix_row(2, 0, 5));
    fix_add(f.hyp, 0, car, 1, fix_row(0, 0, 3));
    fix_add(f.hyp, 0, car, 2, fix_row(2, 0, 2));
    out.push_back(std::move(f));
  }
  {
    MetricsFixture f{"class_mismatch", {}, {}, 0, 1, 1, 0, 0.0, -1.0, -1.0};
    fix_add(f.gt, 0, car, 1, fix_row(0, 0, 4));
    fix_add(f.hyp, 0, ped, 1, fix_row(0, 0, 4));
    out.push_back(std::move(f));
  }
  {
    // ignore region cols 6..9 rows 0..1; hyp 2 has 3/4 px inside (suppressed),
    // hyp 3 has 1/4 inside (FP)
    MetricsFixture f{"ignore_suppression", {}, {}, 1, 1, 0, 0, 1.0, 0.0, 0.0};
    fix_add(f.gt, 0, car, 1, fix_row(3, 0, 4));
    Mask ign(kFixH, kFixW);
    for (int y = 0; y < 2; ++y)
      for (int x = 6; x < 10; ++x) ign.set(y, x);
    f.gt.frames[0].ignore = ign;
    fix_add(f.hyp, 0, car, 1, fix_row(3, 0, 4));
    fix_add(f.hyp, 0, car, 2, fix_row(0, 5, 9));
    fix_add(f.hyp, 0, ped, 3, fix_mask({{1, 9}, {2, 9}, {2, 8}, {2, 7}}));
    out.push_back(std::move(f));
  }
  {
    // IoU exactly 0.5 is not a match
    MetricsFixture f{"iou_exactly_half", {}, {}, 0, 1, 1, 0, 0.0, -1.0, -1.0};
    fix_add(f.gt, 0, ped, 1, fix_row(1, 2, 6));
    fix_add(f.hyp, 0, ped, 1, fix_row(1, 2, 4));
    out.push_back(std::move(f));
  }
  {
    // matched with id 5 on frames 0-1, no hypothesis frame 2, id 6 on frame 3:
    // TP=3 FN=1 IDS=1, MOTSA=(3-0-1)/4
    MetricsFixture f{"gap_then_new_id", {}, {}, 3, 0, 1, 1, 3.0, 0.5, 0.5};
    for (int t = 0; t < 4; ++t) fix_add(f.gt, t, car, 1, fix_row(2, t, t + 3));
    fix_add(f.hyp, 0, car, 5, fix_row(2, 0, 3));
    fix_add(f.hyp, 1, car, 5, fix_row(2, 1, 4));
    fix_add(f.hyp, 3, car, 6, fix_row(2, 3, 6));
    out.push_back(std::move(f));
  }
  {
    // ids 1, 2, 1: two switches
    MetricsFixture f{"switch_and_back", {}, {}, 3, 0, 0, 2, 3.0, 1.0 / 3.0, 1.0 / 3.0};
    const int ids[] = {1, 2, 1};
    for (int t = 0; t < 3; ++t) {
      fix_add(f.gt, t, ped, 4, fix_row(0, 0, 3));
      fix_add(f.hyp, t, ped, ids[t], fix_row(0, 0, 3));
    }
    out.push_back(std::move(f));
  }
  {
    // two tracks exchange hypothesis ids on frame 1: IDS=2, MOTSA=(4-0-2)/4
    MetricsFixture f{"crossing_exchange", {}, {}, 4, 0, 0, 2, 4.0, 0.5, 0.5};
    for (int t = 0; t < 2; ++t) {
      fix_add(f.gt, t, car, 1, fix_row(0, 0, 4));
      fix_add(f.gt, t, car, 2, fix_row(3, 0, 4));
    }
    fix_add(f.hyp, 0, car, 1, fix_row(0, 0, 4));
    fix_add(f.hyp, 0, car, 2, fix_row(3, 0, 4));
    fix_add(f.hyp, 1, car, 2, fix_row(0, 0, 4));
    fix_add(f.hyp, 1, car, 1, fix_row(3, 0, 4));
    out.push_back(std::move(f));
  }
  {
    // hyp = gt plus one extra pixel: IoU 4/5 on both frames
    MetricsFixture f{"soft_iou", {}, {}, 2, 0, 0, 0, 1.6, 1.0, 0.8};
    for (int t = 0; t < 2; ++t) {
      fix_add(f.gt, t, car, 1, fix_row(1, 2, 6));
      fix_add(f.hyp, t, car, 1, fix_row(1, 2, 7));
    }
    out.push_back(std::move(f));
  }
  {
    // cars: TP1 FN1; pedestrians: TP1 (IoU 3/4) FP1; M = 3
    MetricsFixture f{"mixed_classes", {}, {}, 2, 1, 1, 0, 1.75, 1.0 / 3.0, 0.25};
    fix_add(f.gt, 0, car, 1, fix_row(0, 0, 3));
    fix_add(f.gt, 0, ped, 1, fix_row(2, 0, 4));
    fix_add(f.gt, 1, car, 1, fix_row(0, 1, 4));
    fix_add(f.hyp, 0, car, 1, fix_row(0, 0, 3));
    fix_add(f.hyp, 0, ped, 2, fix_row(2, 0, 3));
    fix_add(f.hyp, 0, ped, 3, fix_row(3, 6, 9));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace segtrack::fixtures
