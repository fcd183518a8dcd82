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

#include "segtrack/seg_losses.hpp"

#include <algorithm>
#include <cmath>

namespace segtrack {

LabelGrid make_label_grid(std::span<const InstanceMask> gt, int height, int width,
                          const std::optional<Mask>& ignore) {
  LabelGrid g;
  g.height = height;
  g.width = width;
  g.labels = label_map(gt, height, width);
  if (ignore) {
    for (std::size_t i = 0; i < g.labels.size(); ++i)
      if ((*ignore)[i] && g.labels[i] == 0) g.labels[i] = LabelGrid::kIgnoreLabel;
  }
  return g;
}

double focal_seed_loss(std::span<const double> seed, int num_classes, const LabelGrid& gt, double gamma,
                       std::span<double> grad) {
  if (gamma < 0.0) throw ConfigError("focal_seed_loss: gamma must be >= 0");
  const std::size_t n = static_cast<std::size_t>(gt.height) * gt.width;
  if (seed.size() != n * num_classes) throw ContractViolation("focal_seed_loss: seed/label size mismatch");
  if (!grad.empty()) {
    if (grad.size() != seed.size()) throw ContractViolation("focal_seed_loss: grad size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) valid += gt.labels[i] != LabelGrid::kIgnoreLabel;
  if (valid == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(valid);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = gt.labels[i];
    if (t == LabelGrid::kIgnoreLabel) continue;
    if (t >= num_classes) throw ContractViolation("focal_seed_loss: label outside class range");
    const double raw = seed[t * n + i];
    const double p = std::clamp(raw, kLogEps, 1.0 - kLogEps);
    const double q = 1.0 - p;
    const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    total += -mod * std::log(p);
    if (!grad.empty() && raw > kLogEps && raw < 1.0 - kLogEps) {
      // d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p
      const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
      grad[t * n + i] = inv * (dmod * std::log(p) - mod / p);
    }
  }
  return total * inv;
}

double focal_seed_loss(const DenseMapStack& stack, const LabelGrid& gt, double gamma, MapGrads* grad) {
  if (gt.height != stack.height || gt.width != stack.width)
    throw ContractViolation("focal_seed_loss: label grid size mismatch");
  if (!grad) return focal_seed_loss(stack.seed, stack.num_classes, gt, gamma);
  std::vector<double> g(stack.seed.size());
  const double v = focal_seed_loss(stack.seed, stack.num_classes, gt, gamma, g);
  if (grad->seed.empty()) grad->seed.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad->seed[i] += g[i];
  return v;
}

namespace {

void ensure_grads(const DenseMapStack& s, MapGrads* g) {
  if (!g) return;
  if (g->seed.empty()) g->seed.assign(s.seed.size(), 0.0);
  if (g->sigma.empty()) g->sigma.assign(s.sigma.size(), 0.0);
  if (g->offset.empty()) g->offset.assign(s.offset.size(), 0.0);
}

// Per-instance statistics shared by the seed and clustering losses.
struct InstanceStats {
  std::vector<std::size_t> pixels;
  double cx = 0, cy = 0, sigma = 0;
};

InstanceStats instance_stats(const DenseMapStack& s, const Mask& m) {
  InstanceStats st;
  for (std::size_t i = 0; i < s.pixels(); ++i)
    if (m[i]) st.pixels.push_back(i);
  if (st.pixels.empty()) throw ContractViolation("instance has no pixels");
  for (std::size_t i : st.pixels) {
    st.cx += s.embed_x(i);
    st.cy += s.embed_y(i);
    st.sigma += s.sigma[i];
  }
  const double inv = 1.0 / static_cast<double>(st.pixels.size());
  st.cx *= inv;
  st.cy *= inv;
  st.sigma *= inv;
  return st;
}

// Back-propagates dL/dphi_i (for the listed pixels) into offsets and sigmas,
// including the dependence of the center and margin on the instance pixels.
void backprop_phi(const DenseMapStack& s, const InstanceStats& st, const std::vector<std::size_t>& idx,
                  const std::vector<double>& phi, const std::vector<double>& dphi, MapGrads& g) {
  const std::size_t n = s.pixels();
  const double s2 = st.sigma * st.sigma;
  double gcx = 0, gcy = 0, gsig = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (dphi[k] == 0.0) continue;
    const std::size_t i = idx[k];
    const double dx = s.embed_x(i) - st.cx, dy = s.embed_y(i) - st.cy;
    const double a = dphi[k] * phi[k];
    g.offset[i] += -a * dx / s2;
    g.offset[n + i] += -a * dy / s2;
    gcx += a * dx / s2;
    gcy += a * dy / s2;
    gsig += a * (dx * dx + dy * dy) / (s2 * st.sigma);
  }
  const double inv = 1.0 / static_cast<double>(st.pixels.size());
  for (std::size_t i : st.pixels) {
    g.offset[i] += gcx * inv;
    g.offset[n + i] += gcy * inv;
    g.sigma[i] += gsig * inv;
  }
}

}  // namespace

double gaussian_seed_loss(const DenseMapStack& stack, std::span<const InstanceMask> gt,
                          const GaussianSeedOptions& opt, const Mask* ignore, MapGrads* grad) {
  ensure_grads(stack, grad);
  const std::size_t n = stack.pixels();
  const int C = stack.num_classes;
  // target/weight per (foreground channel, pixel); instance ownership for the target gradient
  std::vector<double> target((C - 1) * n, 0.0);
  std::vector<int> owner(n, -1);
  std::vector<InstanceStats> stats;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const auto& im = gt[k];
    if (im.mask.height() != stack.height || im.mask.width() != stack.width)
      throw ContractViolation("gaussian_seed_loss: mask size mismatch");
    stats.push_back(instance_stats(stack, im.mask));
    const auto& st = stats.back();
    const int c = static_cast<int>(im.class_id);
    for (std::size_t i : st.pixels) {
      const double dx = stack.embed_x(i) - st.cx, dy = stack.embed_y(i) - st.cy;
      target[(c - 1) * n + i] = std::exp(-(dx * dx + dy * dy) / (2.0 * st.sigma * st.sigma));
      owner[i] = static_cast<int>(k);
    }
  }
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) valid += !(ignore && (*ignore)[i]);
  if (valid == 0) return 0.0;
  const double inv = 1.0 / (static_cast<double>(valid) * (C - 1));
  double total = 0.0;
  std::vector<std::vector<double>> dphi(gt.size());
  std::vector<std::vector<double>> phi(gt.size());
  std::vector<std::vector<std::size_t>> idx(gt.size());
  for (int c = 1; c < C; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (ignore && (*ignore)[i]) continue;
      const int k = owner[i];
      const bool fg = k >= 0 && static_cast<int>(gt[k].class_id) == c;
      const double w = fg ? opt.fg_weight : opt.bg_weight;
      const double t = target[(c - 1) * n + i];
      const double r = stack.seed[c * n + i] - t;
      total += w * r * r;
      if (!grad) continue;
      grad->seed[c * n + i] += 2.0 * w * r * inv;
      if (fg && opt.target_gradient) {
        idx[k].push_back(i);
        phi[k].push_back(t);
        dphi[k].push_back(-2.0 * w * r * inv);
      }
    }
  }
  if (grad && opt.target_gradient) {
    for (std::size_t k = 0; k < gt.size(); ++k) backprop_phi(stack, stats[k], idx[k], phi[k], dphi[k], *grad);
  }
  return total * inv;
}

double instance_cluster_loss(const DenseMapStack& stack, std::span<const InstanceMask> gt,
                             const ClusterLossOptions& opt, const Mask* ignore, MapGrads* grad) {
  if (gt.empty()) throw ContractViolation("instance_cluster_loss: needs at least one instance");
  ensure_grads(stack, grad);
  const std::size_t n = stack.pixels();
  std::vector<std::size_t> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(ignore && (*ignore)[i])) all.push_back(i);

  double total = 0.0;
  std::vector<double> phi(all.size()), dphi(all.size());
  for (const auto& im : gt) {
    if (im.mask.height() != stack.height || im.mask.width() != stack.width)
      throw ContractViolation("instance_cluster_loss: mask size mismatch");
    const InstanceStats st = instance_stats(stack, im.mask);
    const double s2 = st.sigma * st.sigma;
    double inter = 0, psum = 0;
    const double gsum = static_cast<double>(st.pixels.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
      const std::size_t i = all[k];
      const double dx = stack.embed_x(i) - st.cx, dy = stack.embed_y(i) - st.cy;
      phi[k] = std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
      psum += phi[k];
      if (im.mask[i]) inter += phi[k];
    }
    const double denom = psum + gsum;
    total += 1.0 - 2.0 * inter / denom;

    double var = 0;
    for (std::size_t i : st.pixels) var += (stack.sigma[i] - st.sigma) * (stack.sigma[i] - st.sigma);
    var /= gsum;
    total += opt.var_weight * var;

    if (!grad) continue;
    for (std::size_t k = 0; k < all.size(); ++k) {
      const double g = im.mask[all[k]] ? 1.0 : 0.0;
      dphi[k] = -2.0 * g / denom + 2.0 * inter / (denom * denom);
    }
    backprop_phi(stack, st, all, phi, dphi, *grad);
    for (std::size_t i : st.pixels) grad->sigma[i] += opt.var_weight * 2.0 * (stack.sigma[i] - st.sigma) / gsum;
  }
  return total;
}

}  // namespace segtrack
