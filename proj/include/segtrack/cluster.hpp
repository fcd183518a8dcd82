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

#include "segtrack/data_model.hpp"
#include "segtrack/segnet.hpp"

namespace segtrack {

enum class SigmaFrom { kSeed, kMean };

struct ClusterParams {
  double seed_threshold = 0.5;
  double assign_threshold = 0.5;  // cut on exp(-|e - C|^2 / (2 s^2))
  int min_pixels = 64;
  SigmaFrom sigma_from = SigmaFrom::kSeed;

  void validate() const;
};

// A pixel is a candidate of foreground class c when c has the highest seed
// score among foreground classes (lowest class id on ties) and that score is
// at least seed_threshold. Per class, the highest-scoring unassigned candidate
// (lowest row-major index on ties) starts a cluster with center e_seed and
// margin sigma_seed; every unassigned candidate with exp(-|e - C|^2 / (2 s^2))
// above assign_threshold joins it. Clusters below min_pixels are discarded but
// their pixels stay consumed. With sigma_from = kMean the margin is replaced by
// the mean sigma of that first grouping and the grouping is redone once.
InstanceSegmentation cluster_instances(const DenseMapStack& stack, const ClusterParams& params);

// Literal rescan-everything implementation of the same procedure, used as a
// test oracle.
InstanceSegmentation brute_force_cluster_oracle(const DenseMapStack& stack, const ClusterParams& params);

}  // namespace segtrack
