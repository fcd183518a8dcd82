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
#include <vector>

#include "segtrack/data_model.hpp"
#include "segtrack/segnet.hpp"

namespace segtrack {

constexpr double kLogEps = 1e-7;

// Per-pixel ground-truth class; kIgnoreLabel pixels do not contribute to losses.
struct LabelGrid {
  static constexpr std::uint8_t kIgnoreLabel = 255;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;
};

LabelGrid make_label_grid(std::span<const InstanceMask> gt, int height, int width,
                          const std::optional<Mask>& ignore = std::nullopt);

// Mean over labelled pixels of -(1 - p_t)^gamma * log(p_t), p_t clamped to
// [eps, 1 - eps]. seed is num_classes x H x W. grad (optional, same layout as
// seed) receives dLoss/dseed and is overwritten.
double focal_seed_loss(std::span<const double> seed, int num_classes, const LabelGrid& gt, double gamma,
                       std::span<double> grad = {});
double focal_seed_loss(const DenseMapStack& stack, const LabelGrid& gt, double gamma, MapGrads* grad = nullptr);

struct GaussianSeedOptions {
  double fg_weight = 10.0;
  double bg_weight = 1.0;
  // When false the Gaussian target is treated as a constant (no gradient
  // reaches sigma/offset through it).
  bool target_gradient = true;
};

// Weighted MSE between the foreground seed channels and a Gaussian heat-map
// target exp(-|e_i - C_k|^2 / (2 s_k^2)) inside each instance k (0 elsewhere),
// averaged over (foreground channel, pixel) entries. Gradients are added to grad.
double gaussian_seed_loss(const DenseMapStack& stack, std::span<const InstanceMask> gt,
                          const GaussianSeedOptions& opt, const Mask* ignore = nullptr,
                          MapGrads* grad = nullptr);

struct ClusterLossOptions {
  double var_weight = 1.0;
};

// Sum over instances of (1 - soft Dice(phi_k, gt_k)) + var_weight * mean((sigma_i - s_k)^2),
// where C_k and s_k are the mean embedding and mean sigma over the instance.
// Gradients (exact, through C_k and s_k) are added to grad.
double instance_cluster_loss(const DenseMapStack& stack, std::span<const InstanceMask> gt,
                             const ClusterLossOptions& opt = {}, const Mask* ignore = nullptr,
                             MapGrads* grad = nullptr);

}  // namespace segtrack
