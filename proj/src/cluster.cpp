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

#include "segtrack/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace segtrack {

void ClusterParams::validate() const {
  if (!(seed_threshold > 0.0 && seed_threshold < 1.0)) throw ConfigError("cluster: seed_threshold must be in (0,1)");
  if (!(assign_threshold > 0.0 && assign_threshold < 1.0))
    throw ConfigError("cluster: assign_threshold must be in (0,1)");
  if (min_pixels < 1) throw ConfigError("cluster: min_pixels must be >= 1");
}

namespace {

int candidate_class(const DenseMapStack& s, std::size_t i, double threshold) {
  int best = 0;
  double best_score = -1.0;
  for (int c = 1; c < s.num_classes; ++c) {
    const double v = s.seed_at(c, i);
    if (v > best_score) {
      best_score = v;
      best = c;
    }
  }
  return best_score >= threshold ? best : 0;
}

bool joins(double ex, double ey, double cx, double cy, double sigma, double threshold) {
  const double dx = ex - cx, dy = ey - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) > threshold;
}

InstanceMask make_instance(const DenseMapStack& s, const std::vector<std::size_t>& pixels, int cls, int id) {
  InstanceMask im;
  im.mask = Mask(s.height, s.width);
  for (std::size_t i : pixels) im.mask.set_linear(i, true);
  im.class_id = static_cast<ClassId>(cls);
  im.instance_id = id;
  return im;
}

}  // namespace

InstanceSegmentation cluster_instances(const DenseMapStack& stack, const ClusterParams& params) {
  params.validate();
  const std::size_t n = stack.pixels();
  std::vector<int> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = candidate_class(stack, i, params.seed_threshold);

  InstanceSegmentation out;
  int next_id = 1;
  std::vector<double> ex(n), ey(n);
  for (std::size_t i = 0; i < n; ++i) {
    ex[i] = stack.embed_x(i);
    ey[i] = stack.embed_y(i);
  }
  const double log_t = -2.0 * std::log(params.assign_threshold);

  for (int c = 1; c < stack.num_classes; ++c) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i)
      if (cls[i] == c) order.push_back(i);
    if (order.empty()) continue;
    const double* seed = stack.seed.data() + c * n;
    std::stable_sort(order.begin(), order.end(), [seed](std::size_t a, std::size_t b) { return seed[a] > seed[b]; });
    std::vector<std::size_t> remaining = order;  // row-major
    std::sort(remaining.begin(), remaining.end());
    std::vector<char> taken(n, 0);
    std::vector<std::size_t> members, keep;

    auto group = [&](double cx, double cy, double sigma) {
      // Radius pre-check skips the exponential for clearly distant pixels.
      const double r2 = log_t * sigma * sigma * (1.0 + 1e-9) + 1e-12;
      members.clear();
      for (std::size_t i : remaining) {
        const double dx = ex[i] - cx, dy = ey[i] - cy;
        if (dx * dx + dy * dy > r2) continue;
        if (joins(ex[i], ey[i], cx, cy, sigma, params.assign_threshold)) members.push_back(i);
      }
    };

    for (std::size_t seed_px : order) {
      if (taken[seed_px]) continue;
      const double cx = ex[seed_px], cy = ey[seed_px];
      double sigma = stack.sigma[seed_px];
      // The seed always belongs to its own cluster, even if sigma underflows.
      auto include_seed = [&] {
        auto it = std::lower_bound(members.begin(), members.end(), seed_px);
        if (it == members.end() || *it != seed_px) members.insert(it, seed_px);
      };
      group(cx, cy, sigma);
      include_seed();
      if (params.sigma_from == SigmaFrom::kMean) {
        double sum = 0;
        for (std::size_t i : members) sum += stack.sigma[i];
        sigma = sum / static_cast<double>(members.size());
        group(cx, cy, sigma);
        include_seed();
      }
      for (std::size_t i : members) taken[i] = 1;
      keep.clear();
      for (std::size_t i : remaining)
        if (!taken[i]) keep.push_back(i);
      remaining.swap(keep);
      if (static_cast<int>(members.size()) >= params.min_pixels)
        out.instances.push_back(make_instance(stack, members, c, next_id++));
    }
  }
  return out;
}

InstanceSegmentation brute_force_cluster_oracle(const DenseMapStack& stack, const ClusterParams& params) {
  params.validate();
  const std::size_t n = stack.pixels();
  InstanceSegmentation out;
  int next_id = 1;
  for (int c = 1; c < stack.num_classes; ++c) {
    std::vector<char> assigned(n, 0);
    while (true) {
      // highest-scoring unassigned pixel of class c; strict '>' keeps the first index on ties
      std::size_t best = n;
      double best_score = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i] || candidate_class(stack, i, params.seed_threshold) != c) continue;
        if (stack.seed_at(c, i) > best_score) {
          best_score = stack.seed_at(c, i);
          best = i;
        }
      }
      if (best == n || best_score < params.seed_threshold) break;
      const double cx = stack.embed_x(best), cy = stack.embed_y(best);
      double sigma = stack.sigma[best];
      auto collect = [&](double s) {
        std::vector<std::size_t> px;
        for (std::size_t i = 0; i < n; ++i) {
          if (assigned[i] || candidate_class(stack, i, params.seed_threshold) != c) continue;
          if (joins(stack.embed_x(i), stack.embed_y(i), cx, cy, s, params.assign_threshold)) px.push_back(i);
        }
        return px;
      };
      auto with_seed = [best](std::vector<std::size_t> px) {
        if (std::find(px.begin(), px.end(), best) == px.end()) {
          px.push_back(best);
          std::sort(px.begin(), px.end());
        }
        return px;
      };
      std::vector<std::size_t> px = with_seed(collect(sigma));
      if (params.sigma_from == SigmaFrom::kMean) {
        double sum = 0;
        for (std::size_t i : px) sum += stack.sigma[i];
        sigma = sum / static_cast<double>(px.size());
        px = with_seed(collect(sigma));
      }
      for (std::size_t i : px) assigned[i] = 1;
      if (static_cast<int>(px.size()) >= params.min_pixels) out.instances.push_back(make_instance(stack, px, c, next_id++));
    }
  }
  return out;
}

}  // namespace segtrack
