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
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"
#include "segtrack/embed_net.hpp"

namespace segtrack {

// Every occurrence of every annotated track in a set of sequences.
struct TrackRecord {
  int sequence = 0;  // index into the sequence list
  int track_id = 0;
  ClassId class_id = ClassId::kCar;
  std::vector<int> frames;     // frame positions (indices into Sequence::frames), increasing
  std::vector<int> instances;  // instance index within each of those frames
};

struct TrackDB {
  std::vector<TrackRecord> tracks;
};

TrackDB build_track_db(const std::vector<Sequence>& sequences);

struct TrainingCrop {
  int track = 0;  // index into TrackDB::tracks, also the label
  int frame = 0;  // frame position in the sequence
  int instance = 0;
  int spacing = 0;
};

// D distinct tracks, each with crops at t, t+s, t+2s for s ~ U{1..S}. When no
// anchor exists for s, s is reduced; tracks without any three equally spaced
// occurrences are skipped. ContractViolation if fewer than D tracks qualify.
std::vector<TrainingCrop> sample_training_batch(const TrackDB& db, int D, int S, std::mt19937_64& rng);

struct StageSpec {
  unsigned active = kAllBranches;     // branches evaluated
  unsigned trainable = kAllBranches;  // branches updated
  int S = 10;
  int iterations = 300;
};

struct EmbedTrainConfig {
  int D = 8;
  int crops_per_id = 3;
  bool multistage = true;
  std::string stage_order = "f,e,p,a";
  int S_f = 8;
  int S_e = 2;
  int S_p = 1;
  int S_a = 5;
  int S_joint = 10;
  int iterations = 300;  // per stage
  double lr = 1e-3;
  double margin = 0.2;
  PointCloudOptions clouds;
  std::uint64_t seed = 5;

  void validate() const;
  // The stage list implied by the config (multi-stage or a single joint stage).
  std::vector<StageSpec> stages() const;
  KeyValueConfig to_kv() const;
  static EmbedTrainConfig from_kv(const KeyValueConfig& kv);
};

struct EmbedStageLog {
  std::string name;  // active branches, e.g. "f" or "a"
  int S = 0;
  int iterations = 0;
  double first_loss = 0.0;  // mean over the first tenth of the iterations
  double last_loss = 0.0;   // mean over the last tenth
  // FNV-1a digests of the frozen parameters before and after the stage.
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
  double seconds = 0.0;
};

using EmbedProgress = std::function<void(const EmbedStageLog&)>;

std::uint64_t param_digest(const nn::ParamStore<float>& params, unsigned branches);

// Trains one stage in place; branches outside spec.trainable are frozen for
// its duration and unfrozen afterwards.
EmbedStageLog train_embed_stage(EmbedNet<float>& net, const std::vector<Sequence>& sequences, const TrackDB& db,
                                const StageSpec& spec, const EmbedTrainConfig& cfg, std::mt19937_64& rng);

EmbedNet<float> run_multistage_training(const std::vector<Sequence>& sequences, const EmbedNetConfig& net_cfg,
                                        const EmbedTrainConfig& cfg, std::vector<EmbedStageLog>* log = nullptr,
                                        const EmbedProgress& progress = {});

// Point clouds of one annotated instance, with categories from the frame's annotation.
PointCloudPair annotated_clouds(const Sequence& seq, int frame, int instance, const PointCloudOptions& opt,
                                std::mt19937_64& rng);

// Fraction of held-out (anchor, positive, negative) triplets, drawn like a
// training batch with spacing S, where d(a, p) < d(a, n) on the full embedding.
double triplet_accuracy(const EmbedNet<float>& net, const std::vector<Sequence>& sequences, int triplets, int S,
                        const PointCloudOptions& opt, std::uint64_t seed);

// Association gate from distances of same-track pairs (1..max_gap frames
// apart) and same-class different-track pairs in the same sequence: the 5th
// percentile of the latter, but at least the 95th percentile of the former.
// The assignment does the fine discrimination; the gate only blocks matches
// to clearly different objects.
double calibrate_gate(const EmbedNet<float>& net, const std::vector<Sequence>& sequences, int pairs, int max_gap,
                      const PointCloudOptions& opt, std::uint64_t seed);

void save_embednet(const std::string& path, const EmbedNet<float>& net, const KeyValueConfig& extra = {});
EmbedNet<float> load_embednet(const std::string& path, KeyValueConfig* config = nullptr);

}  // namespace segtrack
