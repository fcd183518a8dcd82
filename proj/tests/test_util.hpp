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

// Shared helpers for the unit tests: random fixtures and a central
// finite-difference gradient oracle.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "segtrack/data_model.hpp"
#include "segtrack/segnet.hpp"

namespace segtrack::testing {

inline Mask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  Mask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(y, x);
  return m;
}

inline Mask random_mask(int h, int w, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, b(rng));
  return m;
}

inline InstanceMask instance(Mask m, ClassId c, int id, std::optional<int> track = std::nullopt) {
  InstanceMask im;
  im.mask = std::move(m);
  im.class_id = c;
  im.instance_id = id;
  im.track_id = track;
  return im;
}

// Central difference d f / d x[i] with step h.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// Relative error below tol, or an absolute gap at the level of finite-difference round-off.
inline bool grad_close(double analytic, double numeric, double tol = 1e-4, double abs_floor = 1e-9) {
  return relative_error(analytic, numeric) < tol || std::abs(analytic - numeric) < abs_floor;
}

inline DenseMapStack random_stack(int h, int w, std::mt19937_64& rng, double bound = 4.0) {
  DenseMapStack s(kNumSemanticClasses, h, w, bound);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = s.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    double a = u(rng), b = u(rng), c = u(rng);
    const double z = a + b + c;
    s.seed[i] = a / z;
    s.seed[n + i] = b / z;
    s.seed[2 * n + i] = c / z;
    s.sigma[i] = 0.5 + 2.5 * u(rng);
    s.offset[i] = bound * (2 * u(rng) - 1) * 0.9;
    s.offset[n + i] = bound * (2 * u(rng) - 1) * 0.9;
  }
  return s;
}

inline Image random_image(int h, int w, std::mt19937_64& rng) {
  Image img(h, w);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(u(rng));
  return img;
}

}  // namespace segtrack::testing
