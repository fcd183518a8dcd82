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

#include "segtrack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "segtrack/errors.hpp"
#include "segtrack/mots_io.hpp"

namespace fs = std::filesystem;

namespace segtrack {

void SyntheticConfig::validate() const {
  auto check_range = [](const std::vector<int>& v, const char* name) {
    if (v.size() != 4 || v[0] < 1 || v[0] > v[1] || v[2] < 1 || v[2] > v[3])
      throw ConfigError(std::string("synthetic: ") + name + " must be wmin,wmax,hmin,hmax with min <= max");
  };
  if (height < 16 || width < 16) throw ConfigError("synthetic: image must be at least 16x16");
  if (num_sequences < 1 || val_sequences < 0 || val_sequences >= num_sequences)
    throw ConfigError("synthetic: need 1 <= num_sequences and 0 <= val_sequences < num_sequences");
  if (sequence_length < 1) throw ConfigError("synthetic: sequence_length must be >= 1");
  if (min_objects < 1 || min_objects > max_objects || max_objects > 60)
    throw ConfigError("synthetic: object count range must satisfy 1 <= min <= max <= 60");
  if (!(pedestrian_fraction >= 0 && pedestrian_fraction <= 1)) throw ConfigError("synthetic: pedestrian_fraction in [0,1]");
  check_range(car_size, "car_size");
  check_range(ped_size, "ped_size");
  if (std::max(car_size[1], ped_size[1]) >= width || std::max(car_size[3], ped_size[3]) >= height)
    throw ConfigError("synthetic: object sizes must fit inside the image");
  if (!(min_speed >= 0 && min_speed <= max_speed)) throw ConfigError("synthetic: need 0 <= min_speed <= max_speed");
  if (!(occlusion_rate >= 0 && occlusion_rate <= 1)) throw ConfigError("synthetic: occlusion_rate in [0,1]");
  if (!(similar_color_rate >= 0 && similar_color_rate <= 1))
    throw ConfigError("synthetic: similar_color_rate in [0,1]");
  if (texture_noise < 0 || sensor_noise < 0) throw ConfigError("synthetic: noise levels must be >= 0");
  if (min_visible < 1) throw ConfigError("synthetic: min_visible must be >= 1");
}

KeyValueConfig SyntheticConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("gen.height", height);
  kv.set("gen.width", width);
  kv.set("gen.num_sequences", num_sequences);
  kv.set("gen.val_sequences", val_sequences);
  kv.set("gen.sequence_length", sequence_length);
  kv.set("gen.min_objects", min_objects);
  kv.set("gen.max_objects", max_objects);
  kv.set("gen.pedestrian_fraction", pedestrian_fraction);
  kv.set("gen.car_size", join_ints(car_size));
  kv.set("gen.ped_size", join_ints(ped_size));
  kv.set("gen.min_speed", min_speed);
  kv.set("gen.max_speed", max_speed);
  kv.set("gen.occlusion_rate", occlusion_rate);
  kv.set("gen.similar_color_rate", similar_color_rate);
  kv.set("gen.texture_noise", texture_noise);
  kv.set("gen.sensor_noise", sensor_noise);
  kv.set("gen.min_visible", min_visible);
  kv.set("gen.seed", static_cast<long long>(seed));
  return kv;
}

SyntheticConfig SyntheticConfig::from_kv(const KeyValueConfig& kv) {
  SyntheticConfig c;
  c.height = static_cast<int>(kv.get_int("gen.height", c.height));
  c.width = static_cast<int>(kv.get_int("gen.width", c.width));
  c.num_sequences = static_cast<int>(kv.get_int("gen.num_sequences", c.num_sequences));
  c.val_sequences = static_cast<int>(kv.get_int("gen.val_sequences", c.val_sequences));
  c.sequence_length = static_cast<int>(kv.get_int("gen.sequence_length", c.sequence_length));
  c.min_objects = static_cast<int>(kv.get_int("gen.min_objects", c.min_objects));
  c.max_objects = static_cast<int>(kv.get_int("gen.max_objects", c.max_objects));
  c.pedestrian_fraction = kv.get_double("gen.pedestrian_fraction", c.pedestrian_fraction);
  c.car_size = kv.get_int_list("gen.car_size", c.car_size);
  c.ped_size = kv.get_int_list("gen.ped_size", c.ped_size);
  c.min_speed = kv.get_double("gen.min_speed", c.min_speed);
  c.max_speed = kv.get_double("gen.max_speed", c.max_speed);
  c.occlusion_rate = kv.get_double("gen.occlusion_rate", c.occlusion_rate);
  c.similar_color_rate = kv.get_double("gen.similar_color_rate", c.similar_color_rate);
  c.texture_noise = kv.get_double("gen.texture_noise", c.texture_noise);
  c.sensor_noise = kv.get_double("gen.sensor_noise", c.sensor_noise);
  c.min_visible = static_cast<int>(kv.get_int("gen.min_visible", c.min_visible));
  c.seed = static_cast<std::uint64_t>(kv.get_int("gen.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

SyntheticConfig SyntheticConfig::profile(const std::string& name) {
  SyntheticConfig c;
  if (name == "small") return c;
  if (name == "tiny") {
    c.height = 32;
    c.width = 32;
    c.num_sequences = 3;
    c.val_sequences = 1;
    c.sequence_length = 8;
    c.min_objects = 2;
    c.max_objects = 3;
    c.car_size = {8, 12, 5, 7};
    c.ped_size = {4, 5, 8, 11};
    c.min_visible = 6;
    return c;
  }
  throw ConfigError("unknown synthetic profile '" + name + "' (expected small or tiny)");
}

namespace {

struct Object {
  ClassId cls = ClassId::kCar;
  double w = 0, h = 0;           // full extents
  double x = 0, y = 0;           // center at frame 0
  double vx = 0, vy = 0;
  double depth = 0;              // larger is nearer
  double color[3] = {0, 0, 0};
  std::uint64_t texture_seed = 0;
  std::vector<double> cx, cy;    // simulated centers per frame
};

double uniform(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * std::generate_canonical<double, 53>(rng);
}

int uniform_int(std::mt19937_64& rng, int a, int b) {
  return a + static_cast<int>(rng() % static_cast<std::uint64_t>(b - a + 1));
}

// Center moves linearly and bounces off the image border (object stays inside).
void simulate(Object& o, int frames, int H, int W) {
  o.cx.resize(frames);
  o.cy.resize(frames);
  double x = o.x, y = o.y, vx = o.vx, vy = o.vy;
  const double xlo = o.w / 2, xhi = W - o.w / 2, ylo = o.h / 2, yhi = H - o.h / 2;
  for (int t = 0; t < frames; ++t) {
    o.cx[t] = x;
    o.cy[t] = y;
    x += vx;
    y += vy;
    if (x < xlo) x = 2 * xlo - x, vx = -vx;
    if (x > xhi) x = 2 * xhi - x, vx = -vx;
    if (y < ylo) y = 2 * ylo - y, vy = -vy;
    if (y > yhi) y = 2 * yhi - y, vy = -vy;
  }
}

bool boxes_meet(const Object& a, const Object& b, int frames) {
  for (int t = 0; t < frames; ++t) {
    if (std::abs(a.cx[t] - b.cx[t]) * 2 < a.w + b.w + 2 && std::abs(a.cy[t] - b.cy[t]) * 2 < a.h + b.h + 2)
      return true;
  }
  return false;
}

// Objects are rasterized at an integer top-left corner so their shape (and
// unoccluded area) never changes between frames.
int left_of(const Object& o, int t) { return static_cast<int>(std::lround(o.cx[t] - o.w / 2)); }
int top_of(const Object& o, int t) { return static_cast<int>(std::lround(o.cy[t] - o.h / 2)); }

bool covers_local(const Object& o, int u, int v) {
  if (u < 0 || v < 0 || u >= o.w || v >= o.h) return false;
  if (o.cls == ClassId::kCar) return true;
  const double ex = (u + 0.5 - o.w / 2) / (o.w / 2), ey = (v + 0.5 - o.h / 2) / (o.h / 2);
  return ex * ex + ey * ey <= 1.0;
}

// Hash-based texture fixed to the object's own coordinate frame.
double texture(std::uint64_t seed, int u, int v) {
  std::uint64_t z = seed ^ (static_cast<std::uint64_t>(u + 4096) * 0x9E3779B97F4A7C15ULL) ^
                    (static_cast<std::uint64_t>(v + 4096) * 0xC2B2AE3D27D4EB4FULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) / static_cast<double>(1ULL << 53) * 2.0 - 1.0;
}

void random_color(std::mt19937_64& rng, double* rgb) {
  // saturated hue with random value, via HSV
  const double h = uniform(rng, 0, 6), s = uniform(rng, 0.55, 1.0), v = uniform(rng, 110, 245);
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), r = v * (1 - s * (1 - f));
  const double table[6][3] = {{v, r, p}, {q, v, p}, {p, v, r}, {p, q, v}, {r, p, v}, {v, p, q}};
  for (int c = 0; c < 3; ++c) rgb[c] = table[i][c];
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

std::string sequence_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return buf;
}

Sequence generate_synthetic_sequence(const SyntheticConfig& cfg, int sequence_index) {
  cfg.validate();
  std::seed_seq seq_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                         static_cast<std::uint32_t>(sequence_index), 0x5e9u};
  std::mt19937_64 rng(seq_seed);
  const int H = cfg.height, W = cfg.width, T = cfg.sequence_length;

  const int n_obj = uniform_int(rng, cfg.min_objects, cfg.max_objects);
  std::vector<Object> objs;
  for (int k = 0; k < n_obj; ++k) {
    Object o;
    o.cls = uniform(rng, 0, 1) < cfg.pedestrian_fraction ? ClassId::kPedestrian : ClassId::kCar;
    const auto& sz = o.cls == ClassId::kCar ? cfg.car_size : cfg.ped_size;
    o.w = uniform_int(rng, sz[0], sz[1]);
    o.h = uniform_int(rng, sz[2], sz[3]);
    o.depth = uniform(rng, 0, 1);
    o.texture_seed = rng();
    if (!objs.empty() && uniform(rng, 0, 1) < cfg.similar_color_rate) {
      const Object& twin = objs[uniform_int(rng, 0, static_cast<int>(objs.size()) - 1)];
      for (int c = 0; c < 3; ++c) o.color[c] = std::clamp(twin.color[c] + uniform(rng, -12, 12), 0.0, 255.0);
    } else {
      random_color(rng, o.color);
    }
    const bool crossing = !objs.empty() && uniform(rng, 0, 1) < cfg.occlusion_rate;
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      const double speed = uniform(rng, cfg.min_speed, cfg.max_speed);
      const double ang = uniform(rng, 0, 2 * M_PI);
      o.vx = speed * std::cos(ang);
      o.vy = speed * std::sin(ang);
      if (crossing) {
        // meet a previous object at a random time in the middle of the sequence
        const Object& other = objs[uniform_int(rng, 0, static_cast<int>(objs.size()) - 1)];
        const int tc = uniform_int(rng, T / 4, std::max(T / 4, 3 * T / 4));
        o.x = other.cx[tc] - o.vx * tc;
        o.y = other.cy[tc] - o.vy * tc;
        if (o.x < o.w / 2 || o.x > W - o.w / 2 || o.y < o.h / 2 || o.y > H - o.h / 2) continue;
        simulate(o, T, H, W);
        placed = true;
      } else {
        o.x = uniform(rng, o.w / 2, W - o.w / 2);
        o.y = uniform(rng, o.h / 2, H - o.h / 2);
        simulate(o, T, H, W);
        placed = std::none_of(objs.begin(), objs.end(), [&](const Object& b) { return boxes_meet(o, b, T); });
      }
    }
    if (!placed) {
      // fall back to a free-moving object; overlaps are still labelled correctly
      o.x = uniform(rng, o.w / 2, W - o.w / 2);
      o.y = uniform(rng, o.h / 2, H - o.h / 2);
      simulate(o, T, H, W);
    }
    objs.push_back(std::move(o));
  }
  std::vector<int> order(objs.size());
  for (std::size_t k = 0; k < objs.size(); ++k) order[k] = static_cast<int>(k);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return objs[a].depth < objs[b].depth; });

  // static background: gray gradient plus low-frequency blotches
  std::vector<double> bg(static_cast<std::size_t>(H) * W * 3);
  {
    const double base = uniform(rng, 70, 150), gx = uniform(rng, -40, 40), gy = uniform(rng, -40, 40);
    const double tint[3] = {uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10)};
    const std::uint64_t bseed = rng();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double blotch = 10.0 * texture(bseed, x / 4, y / 4) + 4.0 * texture(bseed + 1, x, y);
        for (int c = 0; c < 3; ++c)
          bg[(static_cast<std::size_t>(y) * W + x) * 3 + c] = base + gx * x / W + gy * y / H + tint[c] + blotch;
      }
  }

  Sequence seq;
  seq.sequence_id = sequence_name(sequence_index);
  seq.height = H;
  seq.width = W;
  std::normal_distribution<double> sensor(0.0, 1.0);
  for (int t = 0; t < T; ++t) {
    std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
    for (int k : order) {
      const Object& o = objs[k];
      const int left = left_of(o, t), top = top_of(o, t);
      for (int v = 0; v < o.h; ++v)
        for (int u = 0; u < o.w; ++u) {
          const int y = top + v, x = left + u;
          if (y < 0 || x < 0 || y >= H || x >= W || !covers_local(o, u, v)) continue;
          label[static_cast<std::size_t>(y) * W + x] = k;
        }
    }
    Frame fr;
    fr.sequence_id = seq.sequence_id;
    fr.frame_index = t;
    fr.image = Image(H, W);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        double rgb[3];
        const int k = label[p];
        if (k < 0) {
          for (int c = 0; c < 3; ++c) rgb[c] = bg[p * 3 + c];
        } else {
          const Object& o = objs[k];
          const int u = x - left_of(o, t), v = y - top_of(o, t);
          double shade = cfg.texture_noise * texture(o.texture_seed, u / 2, v / 2);
          if (o.cls == ClassId::kCar && v >= o.h * 0.25 && v < o.h * 0.5) shade -= 45;   // window band
          if (o.cls == ClassId::kPedestrian && v < o.h * 0.25) shade += 30;             // head
          if (o.cls == ClassId::kPedestrian && v >= o.h * 0.6) shade -= 35;            // legs
          for (int c = 0; c < 3; ++c) rgb[c] = o.color[c] + shade;
        }
        for (int c = 0; c < 3; ++c) fr.image.at(y, x, c) = clamp8(rgb[c] + cfg.sensor_noise * sensor(rng));
      }
    }
    FrameAnnotation ann;
    Mask ignore(H, W);
    bool any_ignore = false;
    for (std::size_t k = 0; k < objs.size(); ++k) {
      Mask m(H, W);
      std::size_t area = 0;
      for (std::size_t p = 0; p < label.size(); ++p)
        if (label[p] == static_cast<int>(k)) {
          m.set_linear(p, true);
          ++area;
        }
      if (area == 0) continue;
      if (area < static_cast<std::size_t>(cfg.min_visible)) {
        for (std::size_t p = 0; p < label.size(); ++p)
          if (m[p]) ignore.set_linear(p, true);
        any_ignore = true;
        continue;
      }
      InstanceMask im;
      im.mask = std::move(m);
      im.class_id = objs[k].cls;
      im.track_id = static_cast<int>(k) + 1;
      im.instance_id = static_cast<int>(objs[k].cls) * 1000 + *im.track_id;
      ann.instances.push_back(std::move(im));
    }
    if (any_ignore) ann.ignore = std::move(ignore);
    seq.frames.push_back(std::move(fr));
    seq.annotations.push_back(std::move(ann));
  }
  return seq;
}

void write_synthetic_dataset(const SyntheticConfig& cfg, const std::string& dir) {
  cfg.validate();
  fs::create_directories(fs::path(dir) / "instances_txt");
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream split(fs::path(dir) / "split.txt");
  for (int s = 0; s < cfg.num_sequences; ++s) {
    Sequence seq = generate_synthetic_sequence(cfg, s);
    write_mots_annotations((fs::path(dir) / "instances_txt" / (seq.sequence_id + ".txt")).string(), seq);
    write_sequence_images((fs::path(dir) / "images" / seq.sequence_id).string(), seq);
    split << (s < cfg.num_sequences - cfg.val_sequences ? "train " : "val ") << seq.sequence_id << "\n";
  }
  std::ofstream(fs::path(dir) / "synthetic.cfg") << cfg.to_kv().to_text();
}

Dataset load_dataset(const std::string& dir) {
  const fs::path split_path = fs::path(dir) / "split.txt";
  std::ifstream in(split_path);
  if (!in) throw DataError("dataset '" + dir + "' has no split.txt");
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string part, name;
    if (!(ls >> part)) continue;
    if (!(ls >> name) || (part != "train" && part != "val"))
      throw ParseError(split_path.string(), line_no, "expected 'train|val <sequence>'");
    Sequence seq = load_mots_sequence((fs::path(dir) / "instances_txt" / (name + ".txt")).string(),
                                      (fs::path(dir) / "images" / name).string());
    (part == "train" ? ds.train : ds.val).push_back(std::move(seq));
  }
  return ds;
}

}  // namespace segtrack
