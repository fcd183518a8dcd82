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
#include <vector>

#include "segtrack/cluster.hpp"
#include "segtrack/embed_net.hpp"
#include "segtrack/mots_io.hpp"
#include "segtrack/segnet.hpp"
#include "segtrack/tracker.hpp"

namespace segtrack {

struct PipelineConfig {
  ClusterParams cluster;
  TrackerParams tracker;
  PointCloudOptions clouds;
  std::uint64_t seed = 17;  // point sampling; mixed with the frame index

  void validate() const;
  KeyValueConfig to_kv() const;
  static PipelineConfig from_kv(const KeyValueConfig& kv);
};

// Embeddings m of each instance, with environment categories taken from the
// instances themselves.
std::vector<std::vector<double>> embed_instances(const EmbedNet<float>& net, const Image& image,
                                                 const std::vector<InstanceMask>& instances,
                                                 const PointCloudOptions& opt, std::mt19937_64& rng);

// Online tracking of given per-frame segmentations (frames in order).
MotsAnnotations track_segmentations(const EmbedNet<float>& net, const Sequence& seq,
                                    const std::vector<InstanceSegmentation>& segs, const PipelineConfig& cfg);

std::vector<InstanceSegmentation> segment_sequence(const SegNet<float>& net, const Sequence& seq,
                                                   const ClusterParams& params);

// segment -> embed -> associate, frame by frame.
MotsAnnotations run_pipeline(const SegNet<float>& seg, const EmbedNet<float>& embed, const Sequence& seq,
                             const PipelineConfig& cfg);

}  // namespace segtrack
