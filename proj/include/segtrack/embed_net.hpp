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

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "segtrack/config.hpp"
#include "segtrack/data_model.hpp"
#include "segtrack/nn.hpp"

namespace segtrack {

// Branch bits for gating and freezing.
enum Branch : unsigned {
  kBranchFg = 1u,
  kBranchEnv = 2u,
  kBranchPos = 4u,
  kBranchAgg = 8u,
  kAllBranches = 15u,
};

unsigned parse_branches(const std::string& s);  // e.g. "f", "fep", "a"
std::string branch_names(unsigned branches);

struct EmbedNetConfig {
  int num_categories = kNumSemanticClasses;  // one-hot width of environment points
  std::vector<int> fg_widths = {32, 64};   // per-point MLP, last entry is dim(m_f)
  std::vector<int> env_widths = {32, 32};  // dim(m_e) last
  std::vector<int> pos_widths = {32, 32};  // dim(m_p) last
  std::vector<int> agg_widths = {64, 64};  // dim(m_a) last
  std::uint64_t init_seed = 11;

  void validate() const;
  int fg_dim() const { return fg_widths.back(); }
  int env_dim() const { return env_widths.back(); }
  int pos_dim() const { return pos_widths.back(); }
  int agg_dim() const { return agg_widths.back(); }
  int dim() const { return fg_dim() + env_dim() + pos_dim() + agg_dim(); }
  int fg_point_dim() const { return 5; }  // dx, dy, r, g, b
  int env_point_dim() const { return 2 + num_categories; }

  KeyValueConfig to_kv() const;
  static EmbedNetConfig from_kv(const KeyValueConfig& kv);
};

struct PointCloudOptions {
  int num_fg = 1000;
  int num_env = 500;
  double enlargement = 1.4;
};

// fg rows: (dx, dy, r, g, b); env rows: (dx, dy, one-hot category). dx, dy are
// pixel-center offsets from the enlarged box center divided by its size, so
// they lie in [-0.5, 0.5]. bbox = (cx / W, cy / H, w / W, h / H) of the
// enlarged, clipped box.
struct PointCloudPair {
  nn::RowMat<double> fg;
  nn::RowMat<double> env;
  std::array<double, 4> bbox{};
  bool env_from_border = false;  // environment was empty; sampled from the box border ring
};

// categories: per-pixel class of the frame's segmentation (0 background).
// Regions with enough pixels are sampled without replacement, smaller ones
// with replacement.
PointCloudPair build_point_clouds(const Image& image, const Mask& instance, std::span<const std::uint8_t> categories,
                                  const PointCloudOptions& opt, std::mt19937_64& rng);

struct EmbeddingBundle {
  std::vector<double> m_f, m_e, m_p, m_a;

  std::vector<double> m() const;  // [m_f, m_e, m_p, m_a]
};

// Shared per-point MLPs with max-pooling for the two clouds, an MLP on the box
// vector, and an aggregation MLP over [m_f, m_e, m_p]. Inactive branches
// output zeros.
template <typename T>
class EmbedNet {
 public:
  struct Trace {
    unsigned active = 0;
    std::vector<nn::RowMat<T>> fg, env, pos, agg;  // layer inputs then outputs
    std::vector<int> fg_arg, env_arg;               // max-pool winners per channel
  };

  explicit EmbedNet(const EmbedNetConfig& cfg);

  const EmbedNetConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  EmbeddingBundle forward(const PointCloudPair& pair, unsigned active = kAllBranches, Trace* trace = nullptr) const;
  // dm: gradient with respect to m (length dim()).
  void backward(const Trace& trace, std::span<const double> dm);

  // Freezes (or unfreezes) every parameter of the given branches.
  void set_frozen(unsigned branches, bool frozen);
  // Parameter name prefix of a single branch: "fg.", "env.", "pos." or "agg.".
  static const char* prefix(Branch b);

 private:
  struct Mlp {
    std::vector<nn::Linear<T>> layers;
    bool act_last = true;
  };
  Mlp make_mlp(const std::string& name, int in, const std::vector<int>& widths, bool act_last, std::mt19937_64& rng);
  static void run_mlp(const Mlp& mlp, const nn::RowMat<T>& x, std::vector<nn::RowMat<T>>& acts);
  static nn::RowMat<T> backward_mlp(Mlp& mlp, const std::vector<nn::RowMat<T>>& acts, nn::RowMat<T> d, bool need_dx);

  EmbedNetConfig cfg_;
  nn::ParamStore<T> params_;
  Mlp fg_, env_, pos_, agg_;
};

extern template class EmbedNet<float>;
extern template class EmbedNet<double>;

// Batch-hard triplet loss: mean over anchors of
// max(0, max_pos d(a, p) - min_neg d(a, n) + margin) with Euclidean d.
// Anchors without a positive are skipped. grad (optional) receives
// dLoss/dembedding in the same layout.
double batch_hard_triplet_loss(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels,
                               double margin, std::vector<std::vector<double>>* grad = nullptr);
// All-triplets reference for the same quantity.
double triplet_loss_oracle(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels,
                           double margin);

}  // namespace segtrack
