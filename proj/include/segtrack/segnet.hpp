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
#include <span>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"
#include "segtrack/errors.hpp"
#include "segtrack/nn.hpp"

namespace segtrack {

enum class SeedMode {
  kSemantic,  // softmax over {background, car, pedestrian}, focal loss
  kGaussian,  // per-class sigmoid regressed onto a Gaussian heat-map
};

struct SegNetConfig {
  int num_classes = kNumSemanticClasses;
  SeedMode seed_mode = SeedMode::kSemantic;
  double focal_gamma = 2.0;
  double seed_fg_weight = 10.0;
  double seed_bg_weight = 1.0;
  int upsample_factor = 2;
  // Offset magnitude bound as a fraction of max(H, W) of the network input.
  double offset_bound_frac = 0.25;
  double sigma_init = 4.0;  // pixels at the network input scale
  std::vector<int> encoder_widths = {8, 16, 24, 32, 48};  // stem + 4 stride-2 stages
  std::vector<int> decoder_widths = {32, 24, 16, 8};       // coarse to fine
  std::uint64_t init_seed = 1;

  void validate() const;
  int stride() const { return 1 << (static_cast<int>(encoder_widths.size()) - 1); }
  int seed_channels() const { return seed_mode == SeedMode::kSemantic ? num_classes : num_classes - 1; }

  KeyValueConfig to_kv() const;
  static SegNetConfig from_kv(const KeyValueConfig& kv);
};

const char* seed_mode_name(SeedMode m);
SeedMode parse_seed_mode(const std::string& s);

// Per-pixel network outputs at the network input resolution.
//   seed:   num_classes x H x W, channel 0 is background, values in [0,1]
//   sigma:  H x W, positive cluster margin in pixels
//   offset: 2 x H x W (dx plane, then dy plane), |component| <= offset_bound
// The spatial embedding of pixel (y, x) is (x + dx, y + dy).
struct DenseMapStack {
  int num_classes = kNumSemanticClasses;
  int height = 0;
  int width = 0;
  double offset_bound = 0.0;
  std::vector<double> seed;
  std::vector<double> sigma;
  std::vector<double> offset;

  DenseMapStack() = default;
  DenseMapStack(int classes, int h, int w, double bound);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  double seed_at(int c, std::size_t i) const { return seed[c * pixels() + i]; }
  double embed_x(std::size_t i) const { return static_cast<double>(i % width) + offset[i]; }
  double embed_y(std::size_t i) const { return static_cast<double>(i / width) + offset[pixels() + i]; }

  // Throws ContractViolation if a range invariant is broken.
  void validate() const;
};

// Gradients of a scalar loss with respect to the DenseMapStack values.
struct MapGrads {
  std::vector<double> seed, sigma, offset;

  MapGrads() = default;
  explicit MapGrads(const DenseMapStack& s)
      : seed(s.seed.size(), 0.0), sigma(s.sigma.size(), 0.0), offset(s.offset.size(), 0.0) {}
  void add(const MapGrads& o, double scale = 1.0);
};

// Bilinear (half-pixel centers) image upsampling; factor 1 returns the input.
Frame upsample_input(const Frame& frame, int factor);
// Nearest-neighbour mask upsampling; preserves disjointness.
Mask upsample_mask(const Mask& m, int factor);
FrameAnnotation upsample_annotation(const FrameAnnotation& a, int factor);
// Inverse of upsample_mask for a set of disjoint instances: each output pixel
// takes the instance owning most of its factor x factor block (at least half).
std::vector<InstanceMask> downsample_instances(const std::vector<InstanceMask>& in, int factor);

class PaddingRequired : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// Residual encoder with four stride-2 stages and two U-shaped decoders
// (instance: offset + sigma, seed: per-class scores).
template <typename T>
class SegNet {
 public:
  struct Trace {
    nn::Tensor<T> input;
    std::vector<nn::Tensor<T>> feats;   // stem output then one per stage
    std::vector<nn::Tensor<T>> down;    // stride-2 conv outputs (post activation)
    std::vector<nn::Tensor<T>> res_a;   // first residual conv (post activation)
    std::vector<nn::Buffer<T>> cols;   // im2col buffers: stem, then (down, a, b) per stage
    struct Decoder {
      std::vector<nn::Tensor<T>> cat;   // inputs to each level conv
      std::vector<nn::Tensor<T>> out;   // level outputs (post activation)
      std::vector<nn::Buffer<T>> cols;
      nn::Tensor<T> head;               // raw head output
    };
    Decoder inst, seed;
  };

  explicit SegNet(const SegNetConfig& cfg);

  const SegNetConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  DenseMapStack forward(const Image& image, Trace* trace = nullptr) const;
  // Accumulates parameter gradients for a loss whose map gradients are g.
  void backward(const Trace& trace, const DenseMapStack& out, const MapGrads& g);

 private:
  struct DecoderLayers {
    std::vector<nn::Conv2d<T>> levels;
    nn::Conv2d<T> head;
  };

  void run_decoder(const DecoderLayers& dec, const std::vector<nn::Tensor<T>>& feats,
                   typename Trace::Decoder& tr) const;
  void backward_decoder(DecoderLayers& dec, const typename Trace::Decoder& tr,
                        const nn::Tensor<T>& dhead, std::vector<nn::Tensor<T>>& dfeats);

  SegNetConfig cfg_;
  nn::ParamStore<T> params_;
  nn::Conv2d<T> stem_;
  std::vector<nn::Conv2d<T>> down_, res_a_, res_b_;
  DecoderLayers inst_, seed_;
};

extern template class SegNet<float>;
extern template class SegNet<double>;

// Copy parameter values between precisions (names and shapes must match).
template <typename Dst, typename Src>
void copy_params(nn::ParamStore<Dst>& dst, const nn::ParamStore<Src>& src) {
  for (auto& p : dst.all()) {
    const auto* q = src.find(p.name);
    if (!q || q->shape != p.shape) throw ContractViolation("copy_params: missing or mismatched " + p.name);
    for (std::size_t i = 0; i < p.size(); ++i) p.value[i] = static_cast<Dst>(q->value[i]);
  }
}

}  // namespace segtrack
