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

#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"

namespace segtrack {

struct TrackerParams {
  double max_distance = 0.8;  // gate on Euclidean embedding distance
  int max_age = 30;           // frames a track survives unmatched
  double momentum = 0.9;      // template <- momentum * template + (1 - momentum) * detection

  void validate() const;
  KeyValueConfig to_kv() const;
  static TrackerParams from_kv(const KeyValueConfig& kv);
};

struct Track {
  int track_id = 0;
  ClassId class_id = ClassId::kCar;
  std::vector<double> embedding;
  int last_frame = 0;
  int age = 0;  // frames since the last match
  std::vector<int> history;  // frames where the track was matched or born
};

struct Detection {
  InstanceMask mask;
  std::vector<double> embedding;
};

// Rectangular assignment: maximizes the number of allowed pairs, then
// minimizes their summed cost. Returns the column for each row or -1.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost,
                                  const std::vector<std::vector<char>>& allowed);
// Exhaustive search with the same objective, for small problems.
std::vector<int> brute_force_assignment(const std::vector<std::vector<double>>& cost,
                                        const std::vector<std::vector<char>>& allowed);
double assignment_cost(const std::vector<std::vector<double>>& cost, const std::vector<int>& rows);

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

double embedding_distance(const std::vector<double>& a, const std::vector<double>& b);

Assignment associate(const std::vector<Track>& tracks, const std::vector<Detection>& detections,
                     const TrackerParams& params);

class Tracker {
 public:
  explicit Tracker(const TrackerParams& params);

  // Returns the track id of each detection. Frames must arrive in increasing order.
  std::vector<int> step(int frame_index, const std::vector<Detection>& detections);

  const std::vector<Track>& tracks() const { return tracks_; }
  int next_id() const { return next_id_; }

 private:
  TrackerParams params_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int last_frame_ = -1;
};

}  // namespace segtrack
