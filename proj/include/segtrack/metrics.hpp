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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segtrack/data_model.hpp"
#include "segtrack/mots_io.hpp"

namespace segtrack {

struct MatchOptions {
  double iou_threshold = 0.5;  // strict: a pair matches iff IoU > threshold
  // Drop unmatched hypotheses lying mostly inside an ignore region before FP counting.
  bool suppress_ignored = true;
  double ignore_overlap = 0.5;
};

struct FrameMatches {
  struct Pair {
    int gt = 0;
    int hyp = 0;
    double iou = 0.0;
  };
  std::vector<Pair> pairs;
  std::vector<int> missed_gt;     // false negatives
  std::vector<int> false_hyp;     // false positives
  std::vector<int> ignored_hyp;   // unmatched but suppressed by an ignore region
};

// Throws DataError if two hypotheses overlap.
FrameMatches match_frame(const std::vector<InstanceMask>& gt, const std::vector<InstanceMask>& hyp,
                         const std::optional<Mask>& ignore, const MatchOptions& opts = {});

struct ClassCounts {
  long tp = 0, fp = 0, fn = 0, ids = 0;
  double soft_tp = 0.0;

  long num_gt() const { return tp + fn; }
  // Normalized by the number of GT masks (by 1 when there are none).
  double motsa() const;
  double smotsa() const;
  void add(const ClassCounts& o);
};

struct MetricsReport {
  struct SequenceEntry {
    std::string sequence_id;
    ClassCounts cars, pedestrians;
  };
  ClassCounts cars, pedestrians;
  std::vector<SequenceEntry> sequences;

  ClassCounts overall() const;
  const ClassCounts& for_class(ClassId c) const;
  void add(const MetricsReport& o);

  std::string to_text() const;
  // key=value lines in fixed order
  std::string to_kv() const;
};

// Per-frame hypotheses keyed by frame index; ids come from track_id (instance_id as fallback).
MetricsReport evaluate_sequence(const MotsAnnotations& gt, const MotsAnnotations& hyp,
                                const std::string& sequence_id = "", const MatchOptions& opts = {});
MotsAnnotations annotations_of(const Sequence& seq);

}  // namespace segtrack
