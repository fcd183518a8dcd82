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

// Orchestration shared by the command-line tool and the acceptance checks:
// experiment configuration, ablation rows, run manifests, model caching and
// overlay rendering.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/embed_train.hpp"
#include "segtrack/metrics.hpp"
#include "segtrack/pipeline.hpp"
#include "segtrack/seg_train.hpp"
#include "segtrack/synthetic.hpp"

namespace segtrack {

std::string sha1_hex(const std::string& bytes);
// Hash of "blob <size>\0<content>", as git computes it.
std::string git_blob_hash(const std::string& content);
std::string file_blob_hash(const std::string& path);
// Hash over the sorted (relative path, blob hash) list of every regular file,
// skipping files whose name ends with one of the exclude suffixes.
std::string directory_hash(const std::string& dir, const std::vector<std::string>& exclude = {"manifest.txt"});

struct AblationSpec {
  bool two_x = false;
  bool sem = false;
  bool cp = false;
  bool sep = false;

  std::string name() const;  // "baseline", "+2X", "+Sem", "+CP", "+Sep" for the standard rows
  std::string flags() const;  // e.g. "2x,sem"
  static AblationSpec parse(const std::string& flags);  // inverse of flags(); "" or "none" is the baseline
  bool operator==(const AblationSpec&) const = default;
};

// Cumulative rows: baseline, +2X, +Sem, +CP, +Sep.
std::vector<AblationSpec> standard_ablation_rows();
AblationSpec parse_row_name(const std::string& name);

// Every tunable of the pipeline in one place.
struct ExperimentConfig {
  SegNetConfig seg;
  SegTrainConfig segtrain;
  EmbedNetConfig embed;
  EmbedTrainConfig embtrain;
  PipelineConfig pipeline;
  // Smallest instance kept, in frame pixels; the clustering threshold is this
  // times upsample_factor^2.
  int min_area = 48;
  // Gate calibration (overridden by track.max_distance when calibrate_gate is false).
  bool calibrate_gate = true;
  int gate_pairs = 600;
  int gate_max_gap = 3;

  // Full model: 2X input, semantic focal seeds, copy-paste, separate branch training.
  static ExperimentConfig defaults();
  ExperimentConfig with(const AblationSpec& spec) const;
  AblationSpec spec() const;
  PipelineConfig pipeline_for(int upsample_factor) const;

  void validate() const;
  KeyValueConfig to_kv() const;
  static ExperimentConfig from_kv(const KeyValueConfig& kv);  // unknown keys are a ConfigError
};

// key=value record of one CLI run, written next to its outputs.
struct RunManifest {
  std::string command;
  KeyValueConfig config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;   // label -> "path sha1"
  std::vector<std::pair<std::string, std::string>> outputs;  // label -> "path"
  KeyValueConfig results;

  std::string config_hash() const { return sha1_hex(config.to_text()); }
  void add_input_file(const std::string& label, const std::string& path);
  void add_input_dir(const std::string& label, const std::string& path);
  std::string to_text() const;
  void write(const std::string& path) const;
  static KeyValueConfig read(const std::string& path);
};

using LogFn = std::function<void(const std::string&)>;

// Train-or-load with a content-addressed cache (empty cache_dir disables it).
// The key covers the configuration and the training data hash.
SegNet<float> cached_segnet(const std::string& cache_dir, const std::string& data_hash, const ExperimentConfig& cfg,
                            const std::vector<Sequence>& train, const LogFn& log, bool* from_cache = nullptr);
struct EmbedModel {
  EmbedNet<float> net;
  double gate = 0.0;
  std::vector<EmbedStageLog> stages;
};
EmbedModel cached_embednet(const std::string& cache_dir, const std::string& data_hash, const ExperimentConfig& cfg,
                           const std::vector<Sequence>& train, const LogFn& log, bool* from_cache = nullptr);

// Stage logs and the calibrated gate (track.max_distance) stored alongside the weights.
KeyValueConfig embed_model_kv(const EmbedModel& m);
EmbedModel load_embed_model(const std::string& path);

std::string seg_cache_key(const std::string& data_hash, const ExperimentConfig& cfg);
std::string embed_cache_key(const std::string& data_hash, const ExperimentConfig& cfg);

// Tracks every sequence and evaluates against its annotations.
MetricsReport evaluate_model(const SegNet<float>& seg, const EmbedNet<float>& embed, const std::vector<Sequence>& seqs,
                             const PipelineConfig& pipeline, std::vector<MotsAnnotations>* results = nullptr);

struct AblationRow {
  AblationSpec spec;
  MetricsReport report;
  double seconds = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string to_text() const;
  std::string to_kv() const;
};

// Published full-scale cars sMOTSA (percent) for the standard rows, kept for
// the documentation table only; desk-scale runs are never compared to them.
struct ReferenceRow {
  const char* name;
  double cars_smotsa;
};
extern const ReferenceRow kReferenceAblation[4];

// Runs the rows in order. After each row the table so far is written to
// out_dir/ablation.txt and ablation.kv; a failing row leaves those partial
// files and rethrows.
AblationTable run_ablation(const std::string& data_dir, const std::vector<AblationSpec>& rows,
                           const ExperimentConfig& base, const std::string& out_dir, const std::string& cache_dir,
                           const LogFn& log);

// Blends a per-instance color into the pixels of each mask; pixels outside all
// masks are copied unchanged.
Image render_overlay(const Image& image, const std::vector<InstanceMask>& instances, double alpha = 0.5);

}  // namespace segtrack
