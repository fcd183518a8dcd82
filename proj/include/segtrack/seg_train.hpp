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

#include "segtrack/augment.hpp"
#include "segtrack/cluster.hpp"
#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"
#include "segtrack/seg_losses.hpp"
#include "segtrack/segnet.hpp"

namespace segtrack {

struct SegTrainConfig {
  int epochs = 20;
  int batch = 4;  // frames per optimizer step (gradient accumulation)
  double lr = 3e-3;
  double lr_power = 0.9;  // polynomial decay to zero over the run
  double w_seed = 1.0;
  double w_inst = 1.0;
  double var_weight = 1.0;
  bool gaussian_target_gradient = false;
  bool flip = true;
  // Random RGB channel permutation plus per-channel gain/bias.
  bool color_jitter = true;
  double jitter_gain = 0.25;
  double jitter_bias = 30.0;  // 8-bit units
  // Random square crop at network-input scale; 0 trains on whole frames.
  int crop = 0;
  bool copy_paste = false;
  PasteConfig paste;
  std::uint64_t seed = 1;

  void validate(const SegNetConfig& net) const;
  KeyValueConfig to_kv() const;
  static SegTrainConfig from_kv(const KeyValueConfig& kv);
};

struct SegEpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean total loss over frames
  double seed_loss = 0.0;
  double inst_loss = 0.0;
  int pastes = 0;
  double seconds = 0.0;
};

using SegProgress = std::function<void(const SegEpochLog&)>;

// One training example after augmentation and upsampling.
struct SegSample {
  Image image;
  std::vector<InstanceMask> instances;
  std::optional<Mask> ignore;
};

Image flip_image(const Image& img);
Image jitter_colors(const Image& img, double gain, double bias, std::mt19937_64& rng);
Mask flip_mask(const Mask& m);
Image crop_image(const Image& img, int y0, int x0, int h, int w);
Mask crop_mask(const Mask& m, int y0, int x0, int h, int w);

// Seed + instance loss for one sample; grad (if given) receives dLoss/dmaps.
struct SegLoss {
  double seed = 0.0;
  double inst = 0.0;
  double total = 0.0;
};
SegLoss seg_sample_loss(const SegNetConfig& net, const SegTrainConfig& train, const DenseMapStack& out,
                        const SegSample& sample, MapGrads* grad);

SegNet<float> train_segnet(const SegNetConfig& net_cfg, const SegTrainConfig& train_cfg,
                           const std::vector<Sequence>& train, std::vector<SegEpochLog>* log = nullptr,
                           const SegProgress& progress = {});

void save_segnet(const std::string& path, const SegNet<float>& net, const KeyValueConfig& extra = {});
SegNet<float> load_segnet(const std::string& path);

// Inference: upsample, run the network, cluster, and map the instances back
// to the frame resolution.
InstanceSegmentation segment_frame(const SegNet<float>& net, const Frame& frame, const ClusterParams& params);

}  // namespace segtrack
