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

#include "segtrack/tracker.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "segtrack/errors.hpp"

namespace segtrack {

void TrackerParams::validate() const {
  if (!(max_distance > 0.0)) throw ConfigError("track: max_distance must be > 0");
  if (max_age < 0) throw ConfigError("track: max_age must be >= 0");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("track: momentum must be in [0,1]");
}

KeyValueConfig TrackerParams::to_kv() const {
  KeyValueConfig kv;
  kv.set("track.max_distance", max_distance);
  kv.set("track.max_age", max_age);
  kv.set("track.momentum", momentum);
  return kv;
}

TrackerParams TrackerParams::from_kv(const KeyValueConfig& kv) {
  TrackerParams p;
  p.max_distance = kv.get_double("track.max_distance", p.max_distance);
  p.max_age = static_cast<int>(kv.get_int("track.max_age", p.max_age));
  p.momentum = kv.get_double("track.momentum", p.momentum);
  p.validate();
  return p;
}

namespace {

// Square Hungarian method with row/column potentials; returns column per row.
std::vector<int> hungarian_square(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) row[p[j] - 1] = j - 1;
  return row;
}

void check_shapes(const std::vector<std::vector<double>>& cost, const std::vector<std::vector<char>>& allowed) {
  if (cost.size() != allowed.size()) throw ContractViolation("assignment: cost/allowed row mismatch");
  for (std::size_t i = 0; i < cost.size(); ++i) {
    if (cost[i].size() != allowed[i].size() || cost[i].size() != cost[0].size())
      throw ContractViolation("assignment: ragged matrix");
    for (std::size_t j = 0; j < cost[i].size(); ++j)
      if (allowed[i][j] && !(cost[i][j] >= 0.0 && std::isfinite(cost[i][j])))
        throw ContractViolation("assignment: allowed costs must be finite and non-negative");
  }
}

}  // namespace

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost,
                                  const std::vector<std::vector<char>>& allowed) {
  check_shapes(cost, allowed);
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (allowed[i][j]) total += cost[i][j];
  // Any forbidden pair costs more than every allowed assignment combined, so
  // the optimum first minimizes forbidden pairs, i.e. maximizes real matches.
  const double big = 2.0 * total + 1.0;
  const int k = std::max(n, m);
  std::vector<std::vector<double>> a(k, std::vector<double>(k, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) a[i][j] = allowed[i][j] ? cost[i][j] : big;
  std::vector<int> row = hungarian_square(a);
  std::vector<int> out(n, -1);
  for (int i = 0; i < n; ++i)
    if (row[i] < m && allowed[i][row[i]]) out[i] = row[i];
  return out;
}

std::vector<int> brute_force_assignment(const std::vector<std::vector<double>>& cost,
                                        const std::vector<std::vector<char>>& allowed) {
  check_shapes(cost, allowed);
  const int n = static_cast<int>(cost.size());
  const int m = n ? static_cast<int>(cost[0].size()) : 0;
  std::vector<int> cur(n, -1), best(n, -1);
  std::vector<char> col_used(m, 0);
  int best_count = -1;
  double best_cost = 0.0;
  std::function<void(int, int, double)> rec = [&](int i, int count, double c) {
    if (i == n) {
      if (count > best_count || (count == best_count && c < best_cost)) {
        best_count = count;
        best_cost = c;
        best = cur;
      }
      return;
    }
    cur[i] = -1;
    rec(i + 1, count, c);
    for (int j = 0; j < m; ++j) {
      if (col_used[j] || !allowed[i][j]) continue;
      col_used[j] = 1;
      cur[i] = j;
      rec(i + 1, count + 1, c + cost[i][j]);
      col_used[j] = 0;
      cur[i] = -1;
    }
  };
  rec(0, 0, 0.0);
  return best;
}

double assignment_cost(const std::vector<std::vector<double>>& cost, const std::vector<int>& rows) {
  double c = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] >= 0) c += cost[i][rows[i]];
  return c;
}

double embedding_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractViolation("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Assignment associate(const std::vector<Track>& tracks, const std::vector<Detection>& detections,
                     const TrackerParams& params) {
  Assignment out;
  const std::size_t n = tracks.size(), m = detections.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(m, 0.0));
  std::vector<std::vector<char>> allowed(n, std::vector<char>(m, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = embedding_distance(tracks[i].embedding, detections[j].embedding);
      cost[i][j] = d;
      allowed[i][j] = tracks[i].class_id == detections[j].mask.class_id && d <= params.max_distance;
    }
  }
  std::vector<int> rows = solve_assignment(cost, allowed);
  std::vector<char> det_used(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows.empty() || rows[i] < 0) {
      out.unmatched_tracks.push_back(static_cast<int>(i));
    } else {
      out.matches.emplace_back(static_cast<int>(i), rows[i]);
      det_used[rows[i]] = 1;
    }
  }
  for (std::size_t j = 0; j < m; ++j)
    if (!det_used[j]) out.unmatched_detections.push_back(static_cast<int>(j));
  return out;
}

Tracker::Tracker(const TrackerParams& params) : params_(params) { params_.validate(); }

std::vector<int> Tracker::step(int frame_index, const std::vector<Detection>& detections) {
  if (frame_index <= last_frame_)
    throw ContractViolation("tracker: frame " + std::to_string(frame_index) + " after frame " +
                            std::to_string(last_frame_));
  last_frame_ = frame_index;
  for (std::size_t j = 1; j < detections.size(); ++j)
    if (detections[j].embedding.size() != detections[0].embedding.size())
      throw ContractViolation("tracker: detection embeddings differ in dimension");

  const Assignment a = associate(tracks_, detections, params_);
  std::vector<int> ids(detections.size(), 0);
  for (auto [ti, di] : a.matches) {
    Track& t = tracks_[ti];
    const auto& e = detections[di].embedding;
    for (std::size_t k = 0; k < e.size(); ++k) t.embedding[k] = params_.momentum * t.embedding[k] + (1.0 - params_.momentum) * e[k];
    t.last_frame = frame_index;
    t.age = 0;
    t.history.push_back(frame_index);
    ids[di] = t.track_id;
  }
  for (int ti : a.unmatched_tracks) tracks_[ti].age = frame_index - tracks_[ti].last_frame;
  std::erase_if(tracks_, [this](const Track& t) { return t.age > params_.max_age; });
  for (int di : a.unmatched_detections) {
    Track t;
    t.track_id = next_id_++;
    t.class_id = detections[di].mask.class_id;
    t.embedding = detections[di].embedding;
    t.last_frame = frame_index;
    t.history.push_back(frame_index);
    ids[di] = t.track_id;
    tracks_.push_back(std::move(t));
  }
  return ids;
}

}  // namespace segtrack
