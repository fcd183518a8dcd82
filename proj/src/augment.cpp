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

#include "segtrack/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segtrack/errors.hpp"

namespace segtrack {

double mask_lightness(const Image& image, const Mask& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      sum += (0.2126 * image.at(y, x, 0) + 0.7152 * image.at(y, x, 1) + 0.0722 * image.at(y, x, 2)) / 255.0;
      ++n;
    }
  if (n == 0) throw ContractViolation("mask_lightness: empty mask");
  return sum / static_cast<double>(n);
}

InstanceDB build_instance_db(const std::vector<Sequence>& sequences) {
  InstanceDB db;
  for (const auto& seq : sequences) {
    for (std::size_t f = 0; f < seq.frames.size() && f < seq.annotations.size(); ++f) {
      const Frame& fr = seq.frames[f];
      for (const auto& im : seq.annotations[f].instances) {
        if (im.class_id != ClassId::kPedestrian || !im.mask.any()) continue;
        const BBox b = tight_bbox(im.mask);
        const int x0 = static_cast<int>(b.x_min), y0 = static_cast<int>(b.y_min);
        const int w = static_cast<int>(b.width()), h = static_cast<int>(b.height());
        InstanceDBEntry e;
        e.patch = Image(h, w);
        e.mask = Mask(h, w);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) e.patch.at(y, x, c) = fr.image.at(y0 + y, x0 + x, c);
            e.mask.set(y, x, im.mask.at(y0 + y, x0 + x));
          }
        e.class_id = im.class_id;
        e.lightness = mask_lightness(fr.image, im.mask);
        e.sequence_id = seq.sequence_id;
        e.frame_index = fr.frame_index;
        e.instance_id = im.instance_id;
        db.entries.push_back(std::move(e));
      }
    }
  }
  return db;
}

void PasteConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_car) || !prob(p_ped)) throw ConfigError("cp: probabilities must be in [0,1]");
  if (!(lightness_tol > 0.0)) throw ConfigError("cp: lightness_tol must be > 0");
  if (!(min_cover >= 0.0 && min_cover <= max_cover && max_cover <= 1.0))
    throw ConfigError("cp: need 0 <= min_cover <= max_cover <= 1");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("cp: need 0 < scale_min <= scale_max");
  if (max_attempts < 1) throw ConfigError("cp: max_attempts must be >= 1");
  if (min_pixels < 1) throw ConfigError("cp: min_pixels must be >= 1");
}

KeyValueConfig PasteConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("cp.p_car", p_car);
  kv.set("cp.p_ped", p_ped);
  kv.set("cp.lightness_tol", lightness_tol);
  kv.set("cp.min_cover", min_cover);
  kv.set("cp.max_cover", max_cover);
  kv.set("cp.scale_min", scale_min);
  kv.set("cp.scale_max", scale_max);
  kv.set("cp.max_attempts", max_attempts);
  kv.set("cp.min_pixels", min_pixels);
  return kv;
}

PasteConfig PasteConfig::from_kv(const KeyValueConfig& kv) {
  PasteConfig c;
  c.p_car = kv.get_double("cp.p_car", c.p_car);
  c.p_ped = kv.get_double("cp.p_ped", c.p_ped);
  c.lightness_tol = kv.get_double("cp.lightness_tol", c.lightness_tol);
  c.min_cover = kv.get_double("cp.min_cover", c.min_cover);
  c.max_cover = kv.get_double("cp.max_cover", c.max_cover);
  c.scale_min = kv.get_double("cp.scale_min", c.scale_min);
  c.scale_max = kv.get_double("cp.scale_max", c.scale_max);
  c.max_attempts = static_cast<int>(kv.get_int("cp.max_attempts", c.max_attempts));
  c.min_pixels = static_cast<int>(kv.get_int("cp.min_pixels", c.min_pixels));
  c.validate();
  return c;
}

namespace {

double unit(std::mt19937_64& rng) { return std::generate_canonical<double, 53>(rng); }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Nearest-neighbour resize of a donor to the given size.
void resize_donor(const InstanceDBEntry& d, int h, int w, Image& patch, Mask& mask) {
  patch = Image(h, w);
  mask = Mask(h, w);
  const int sh = d.mask.height(), sw = d.mask.width();
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(sh - 1, static_cast<int>((y + 0.5) * sh / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(sw - 1, static_cast<int>((x + 0.5) * sw / w));
      mask.set(y, x, d.mask.at(sy, sx));
      for (int c = 0; c < 3; ++c) patch.at(y, x, c) = d.patch.at(sy, sx, c);
    }
  }
}

int pick_donor(const InstanceDB& db, double host_lightness, double tol, std::mt19937_64& rng, bool& fallback) {
  std::vector<int> close;
  int nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < db.entries.size(); ++i) {
    const double d = std::abs(db.entries[i].lightness - host_lightness);
    if (d <= tol) close.push_back(static_cast<int>(i));
    if (d < best) {
      best = d;
      nearest = static_cast<int>(i);
    }
  }
  fallback = close.empty();
  if (fallback) return nearest;
  return close[rng() % close.size()];
}

}  // namespace

PasteResult copy_paste(const Frame& frame, const FrameAnnotation& annotation, const InstanceDB& db,
                       const PasteConfig& config, std::mt19937_64& rng) {
  config.validate();
  PasteResult out;
  out.frame = frame;
  out.annotation = annotation;
  const int H = frame.height(), W = frame.width();
  auto& inst = out.annotation.instances;
  // Track which output mask still corresponds to each input host.
  std::vector<int> slot(annotation.instances.size());
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] = static_cast<int>(i);
  int next_id = 1;
  // donor ids must not collide with any host id as written to MOTS files
  for (const auto& im : inst) next_id = std::max({next_id, im.instance_id + 1, im.track_id.value_or(0) + 1});

  for (std::size_t h = 0; h < annotation.instances.size(); ++h) {
    PasteEvent ev;
    ev.host = static_cast<int>(h);
    ev.host_class = annotation.instances[h].class_id;
    const double p = ev.host_class == ClassId::kCar ? config.p_car : config.p_ped;
    ev.fired = unit(rng) < p;
    if (!ev.fired || slot[h] < 0) {
      out.events.push_back(ev);
      continue;
    }
    if (db.empty()) throw ContractViolation("copy_paste: paste fired with an empty instance database");
    const Mask& host = inst[slot[h]].mask;
    const double host_area = static_cast<double>(host.area());
    ev.donor = pick_donor(db, mask_lightness(out.frame.image, host), config.lightness_tol, rng, ev.fallback);
    const InstanceDBEntry& donor = db.entries[ev.donor];
    ev.lightness_diff = std::abs(donor.lightness - mask_lightness(out.frame.image, host));

    const BBox hb = tight_bbox(host);
    Image patch;
    Mask dmask;
    int px = 0, py = 0;
    bool placed = false;
    for (ev.attempts = 1; ev.attempts <= config.max_attempts && !placed; ++ev.attempts) {
      const double ratio = config.scale_min + (config.scale_max - config.scale_min) * unit(rng);
      const int dh = std::max(1, static_cast<int>(std::lround(ratio * hb.height())));
      const int dw = std::max(1, static_cast<int>(std::lround(dh * static_cast<double>(donor.mask.width()) /
                                                              donor.mask.height())));
      if (dh > H || dw > W) continue;
      resize_donor(donor, dh, dw, patch, dmask);
      if (static_cast<int>(dmask.area()) < config.min_pixels) continue;
      // top-left such that the donor box overlaps the host box and stays in-image
      const int x_lo = std::max(0, static_cast<int>(hb.x_min) - dw + 1);
      const int x_hi = std::min(W - dw, static_cast<int>(hb.x_max) - 1);
      const int y_lo = std::max(0, static_cast<int>(hb.y_min) - dh + 1);
      const int y_hi = std::min(H - dh, static_cast<int>(hb.y_max) - 1);
      if (x_lo > x_hi || y_lo > y_hi) continue;
      px = uniform_int(rng, x_lo, x_hi);
      py = uniform_int(rng, y_lo, y_hi);
      std::size_t covered = 0;
      for (int y = 0; y < dh; ++y)
        for (int x = 0; x < dw; ++x)
          if (dmask.at(y, x) && host.at(py + y, px + x)) ++covered;
      ev.covered = static_cast<double>(covered) / host_area;
      placed = ev.covered >= config.min_cover && ev.covered <= config.max_cover;
    }
    --ev.attempts;
    if (!placed) {
      ev.covered = 0.0;
      out.events.push_back(ev);
      continue;
    }
    ev.pasted = true;
    Mask full(H, W);
    for (int y = 0; y < dmask.height(); ++y)
      for (int x = 0; x < dmask.width(); ++x) {
        if (!dmask.at(y, x)) continue;
        full.set(py + y, px + x);
        for (int c = 0; c < 3; ++c) out.frame.image.at(py + y, px + x, c) = patch.at(y, x, c);
      }
    // Occluded masks lose the donor pixels; masks cut too small disappear.
    std::vector<int> remap(inst.size(), -1);
    std::vector<InstanceMask> kept;
    for (std::size_t k = 0; k < inst.size(); ++k) {
      const std::size_t before = inst[k].mask.area();
      Mask cut = mask_subtract(inst[k].mask, full);
      const std::size_t after = cut.area();
      if (after == 0 || (after < before && after < static_cast<std::size_t>(config.min_pixels))) continue;
      remap[k] = static_cast<int>(kept.size());
      inst[k].mask = std::move(cut);
      kept.push_back(std::move(inst[k]));
    }
    for (auto& s : slot)
      if (s >= 0) s = remap[s];
    InstanceMask pasted;
    pasted.mask = std::move(full);
    pasted.class_id = donor.class_id;
    pasted.instance_id = next_id++;
    kept.push_back(std::move(pasted));
    inst = std::move(kept);
    if (out.annotation.ignore) out.annotation.ignore = mask_subtract(*out.annotation.ignore, inst.back().mask);
    out.events.push_back(ev);
  }
  return out;
}

}  // namespace segtrack
