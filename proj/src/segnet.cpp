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

#include "segtrack/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace segtrack {

namespace {

constexpr double kSigmaRawClamp = 8.0;

}  // namespace

const char* seed_mode_name(SeedMode m) { return m == SeedMode::kSemantic ? "semantic" : "gaussian"; }

SeedMode parse_seed_mode(const std::string& s) {
  if (s == "semantic" || s == "sem") return SeedMode::kSemantic;
  if (s == "gaussian" || s == "gauss") return SeedMode::kGaussian;
  throw ConfigError("unknown seed mode '" + s + "' (expected semantic|gaussian)");
}

void SegNetConfig::validate() const {
  if (num_classes != kNumSemanticClasses) throw ConfigError("seg: num_classes must be 3");
  if (!(focal_gamma >= 0.0)) throw ConfigError("seg: focal_gamma must be >= 0");
  if (!(seed_fg_weight > 0.0) || !(seed_bg_weight > 0.0)) throw ConfigError("seg: seed weights must be > 0");
  if (upsample_factor != 1 && upsample_factor != 2) throw ConfigError("seg: upsample_factor must be 1 or 2");
  if (!(offset_bound_frac > 0.0)) throw ConfigError("seg: offset_bound_frac must be > 0");
  if (!(sigma_init > 0.0)) throw ConfigError("seg: sigma_init must be > 0");
  if (encoder_widths.size() != 5) throw ConfigError("seg: encoder_widths needs 5 entries (stem + 4 stages)");
  if (decoder_widths.size() != 4) throw ConfigError("seg: decoder_widths needs 4 entries");
  for (int w : encoder_widths)
    if (w <= 0) throw ConfigError("seg: widths must be positive");
  for (int w : decoder_widths)
    if (w <= 0) throw ConfigError("seg: widths must be positive");
}

KeyValueConfig SegNetConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("seg.seed_mode", std::string(seed_mode_name(seed_mode)));
  kv.set("seg.focal_gamma", focal_gamma);
  kv.set("seg.seed_fg_weight", seed_fg_weight);
  kv.set("seg.seed_bg_weight", seed_bg_weight);
  kv.set("seg.upsample_factor", upsample_factor);
  kv.set("seg.offset_bound_frac", offset_bound_frac);
  kv.set("seg.sigma_init", sigma_init);
  kv.set("seg.encoder_widths", join_ints(encoder_widths));
  kv.set("seg.decoder_widths", join_ints(decoder_widths));
  kv.set("seg.init_seed", static_cast<long long>(init_seed));
  return kv;
}

SegNetConfig SegNetConfig::from_kv(const KeyValueConfig& kv) {
  SegNetConfig c;
  c.seed_mode = parse_seed_mode(kv.get_string("seg.seed_mode", seed_mode_name(c.seed_mode)));
  c.focal_gamma = kv.get_double("seg.focal_gamma", c.focal_gamma);
  c.seed_fg_weight = kv.get_double("seg.seed_fg_weight", c.seed_fg_weight);
  c.seed_bg_weight = kv.get_double("seg.seed_bg_weight", c.seed_bg_weight);
  c.upsample_factor = static_cast<int>(kv.get_int("seg.upsample_factor", c.upsample_factor));
  c.offset_bound_frac = kv.get_double("seg.offset_bound_frac", c.offset_bound_frac);
  c.sigma_init = kv.get_double("seg.sigma_init", c.sigma_init);
  c.encoder_widths = kv.get_int_list("seg.encoder_widths", c.encoder_widths);
  c.decoder_widths = kv.get_int_list("seg.decoder_widths", c.decoder_widths);
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("seg.init_seed", static_cast<long long>(c.init_seed)));
  c.validate();
  return c;
}

DenseMapStack::DenseMapStack(int classes, int h, int w, double bound)
    : num_classes(classes), height(h), width(w), offset_bound(bound) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  seed.assign(static_cast<std::size_t>(classes) * n, 0.0);
  sigma.assign(n, 1.0);
  offset.assign(2 * n, 0.0);
}

void DenseMapStack::validate() const {
  const std::size_t n = pixels();
  if (seed.size() != static_cast<std::size_t>(num_classes) * n || sigma.size() != n || offset.size() != 2 * n)
    throw ContractViolation("DenseMapStack: array sizes do not match dimensions");
  for (double s : seed)
    if (!(s >= 0.0 && s <= 1.0)) throw ContractViolation("DenseMapStack: seed outside [0,1]");
  for (double s : sigma)
    if (!(s > 0.0) || !std::isfinite(s)) throw ContractViolation("DenseMapStack: sigma not positive");
  for (double o : offset)
    if (!(std::abs(o) <= offset_bound)) throw ContractViolation("DenseMapStack: offset exceeds bound");
}

void MapGrads::add(const MapGrads& o, double scale) {
  auto acc = [scale](std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty()) a.assign(b.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += scale * b[i];
  };
  acc(seed, o.seed);
  acc(sigma, o.sigma);
  acc(offset, o.offset);
}

Frame upsample_input(const Frame& frame, int factor) {
  if (factor < 1) throw ContractViolation("upsample_input: factor must be >= 1");
  if (factor == 1) return frame;
  const Image& src = frame.image;
  Frame out;
  out.sequence_id = frame.sequence_id;
  out.frame_index = frame.frame_index;
  out.image = Image(src.height * factor, src.width * factor);
  auto coord = [factor](int dst, int n, int& i0, int& i1, double& t) {
    double s = (dst + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, n - 1);
    t = s - i0;
  };
  for (int y = 0; y < out.image.height; ++y) {
    int y0, y1;
    double ty;
    coord(y, src.height, y0, y1, ty);
    for (int x = 0; x < out.image.width; ++x) {
      int x0, x1;
      double tx;
      coord(x, src.width, x0, x1, tx);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - ty) * ((1 - tx) * src.at(y0, x0, c) + tx * src.at(y0, x1, c)) +
                         ty * ((1 - tx) * src.at(y1, x0, c) + tx * src.at(y1, x1, c));
        out.image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Mask upsample_mask(const Mask& m, int factor) {
  if (factor == 1) return m;
  Mask out(m.height() * factor, m.width() * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (m.at(y / factor, x / factor)) out.set(y, x);
  return out;
}

FrameAnnotation upsample_annotation(const FrameAnnotation& a, int factor) {
  FrameAnnotation out;
  for (const auto& im : a.instances) {
    InstanceMask u = im;
    u.mask = upsample_mask(im.mask, factor);
    out.instances.push_back(std::move(u));
  }
  if (a.ignore) out.ignore = upsample_mask(*a.ignore, factor);
  return out;
}

std::vector<InstanceMask> downsample_instances(const std::vector<InstanceMask>& in, int factor) {
  if (factor == 1 || in.empty()) return in;
  const int H = in.front().mask.height(), W = in.front().mask.width();
  if (H % factor || W % factor) throw ContractViolation("downsample_instances: size not divisible");
  const int h = H / factor, w = W / factor;
  const int need = (factor * factor + 1) / 2;
  std::vector<InstanceMask> out;
  for (const auto& im : in) {
    InstanceMask d = im;
    d.mask = Mask(h, w);
    out.push_back(std::move(d));
  }
  std::vector<int> votes(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(votes.begin(), votes.end(), 0);
      for (std::size_t k = 0; k < in.size(); ++k)
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            if (in[k].mask.at(y * factor + dy, x * factor + dx)) ++votes[k];
      int best = -1;
      for (std::size_t k = 0; k < in.size(); ++k)
        if (votes[k] >= need && (best < 0 || votes[k] > votes[best])) best = static_cast<int>(k);
      if (best >= 0) out[best].mask.set(y, x);
    }
  }
  std::erase_if(out, [](const InstanceMask& m) { return !m.mask.any(); });
  return out;
}

template <typename T>
SegNet<T>::SegNet(const SegNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& e = cfg_.encoder_widths;
  const auto& d = cfg_.decoder_widths;
  std::mt19937_64 rng(cfg_.init_seed);
  stem_ = nn::Conv2d<T>(params_, "enc.stem", 3, e[0], 3, 1);
  stem_.init(rng);
  for (int s = 1; s <= 4; ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    down_.emplace_back(params_, p + ".down", e[s - 1], e[s], 3, 2);
    res_a_.emplace_back(params_, p + ".res_a", e[s], e[s], 3, 1);
    res_b_.emplace_back(params_, p + ".res_b", e[s], e[s], 3, 1);
    down_.back().init(rng);
    res_a_.back().init(rng);
    res_b_.back().init(rng, 0.5);
  }
  auto build_decoder = [&](DecoderLayers& dec, const std::string& name, int out_ch) {
    int prev = e[4];
    for (int j = 0; j < 4; ++j) {
      const int skip = e[3 - j];
      dec.levels.emplace_back(params_, name + ".level" + std::to_string(j), prev + skip, d[j], 3, 1);
      dec.levels.back().init(rng);
      prev = d[j];
    }
    dec.head = nn::Conv2d<T>(params_, name + ".head", prev, out_ch, 1, 1);
    dec.head.init(rng, 0.1);
  };
  build_decoder(inst_, "inst", 3);
  build_decoder(seed_, "seed", cfg_.seed_channels());
  inst_.head.bias().value[2] = static_cast<T>(std::log(cfg_.sigma_init));
}

template <typename T>
void SegNet<T>::run_decoder(const DecoderLayers& dec, const std::vector<nn::Tensor<T>>& feats,
                            typename Trace::Decoder& tr) const {
  tr.cat.resize(4);
  tr.out.resize(4);
  tr.cols.resize(4);
  const nn::Tensor<T>* prev = &feats[4];
  for (int j = 0; j < 4; ++j) {
    tr.cat[j] = nn::concat_channels(nn::upsample_nearest2x(*prev), feats[3 - j]);
    dec.levels[j].forward(tr.cat[j], tr.out[j], tr.cols[j]);
    nn::leaky_relu_inplace(tr.out[j].v);
    prev = &tr.out[j];
  }
  nn::Buffer<T> unused;
  dec.head.forward(tr.out[3], tr.head, unused);
}

template <typename T>
DenseMapStack SegNet<T>::forward(const Image& image, Trace* trace) const {
  const int stride = cfg_.stride();
  if (image.height % stride || image.width % stride) {
    throw PaddingRequired("SegNet: input " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + " must be divisible by " +
                          std::to_string(stride) + "; pad the image first");
  }
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.input = nn::Tensor<T>(3, image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        tr.input.at(c, y, x) = static_cast<T>((image.at(y, x, c) / 255.0 - 0.5) * 4.0);

  tr.feats.assign(5, {});
  tr.down.assign(4, {});
  tr.res_a.assign(4, {});
  tr.cols.assign(13, {});
  stem_.forward(tr.input, tr.feats[0], tr.cols[0]);
  nn::leaky_relu_inplace(tr.feats[0].v);
  for (int s = 0; s < 4; ++s) {
    down_[s].forward(tr.feats[s], tr.down[s], tr.cols[1 + 3 * s]);
    nn::leaky_relu_inplace(tr.down[s].v);
    res_a_[s].forward(tr.down[s], tr.res_a[s], tr.cols[2 + 3 * s]);
    nn::leaky_relu_inplace(tr.res_a[s].v);
    nn::Tensor<T> b;
    res_b_[s].forward(tr.res_a[s], b, tr.cols[3 + 3 * s]);
    for (std::size_t i = 0; i < b.size(); ++i) b.v[i] += tr.down[s].v[i];
    nn::leaky_relu_inplace(b.v);
    tr.feats[s + 1] = std::move(b);
  }
  run_decoder(inst_, tr.feats, tr.inst);
  run_decoder(seed_, tr.feats, tr.seed);

  const int H = image.height, W = image.width;
  const std::size_t n = static_cast<std::size_t>(H) * W;
  DenseMapStack out(cfg_.num_classes, H, W, cfg_.offset_bound_frac * std::max(H, W));
  const T* ih = tr.inst.head.v.data();
  for (std::size_t i = 0; i < n; ++i) {
    out.offset[i] = out.offset_bound * std::tanh(static_cast<double>(ih[i]));
    out.offset[n + i] = out.offset_bound * std::tanh(static_cast<double>(ih[n + i]));
    const double raw = std::clamp(static_cast<double>(ih[2 * n + i]), -kSigmaRawClamp, kSigmaRawClamp);
    out.sigma[i] = std::exp(raw);
  }
  const T* sh = tr.seed.head.v.data();
  if (cfg_.seed_mode == SeedMode::kSemantic) {
    const int C = cfg_.num_classes;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(sh[c * n + i]));
      double z = 0;
      for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(sh[c * n + i]) - mx);
      for (int c = 0; c < C; ++c) out.seed[c * n + i] = std::exp(static_cast<double>(sh[c * n + i]) - mx) / z;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double bg = 1.0;
      for (int c = 1; c < cfg_.num_classes; ++c) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(sh[(c - 1) * n + i])));
        out.seed[c * n + i] = s;
        bg *= 1.0 - s;
      }
      out.seed[i] = bg;
    }
  }
  return out;
}

template <typename T>
void SegNet<T>::backward_decoder(DecoderLayers& dec, const typename Trace::Decoder& tr,
                                 const nn::Tensor<T>& dhead, std::vector<nn::Tensor<T>>& dfeats) {
  nn::Tensor<T> d;
  nn::Buffer<T> unused;
  dec.head.backward(tr.out[3], unused, dhead, &d);
  for (int j = 3; j >= 0; --j) {
    nn::leaky_relu_backward_inplace(tr.out[j].v, d.v);
    nn::Tensor<T> dcat;
    dec.levels[j].backward(tr.cat[j], tr.cols[j], d, &dcat);
    nn::Tensor<T> dup, dskip;
    const int up_ch = dcat.c - dfeats[3 - j].c;
    nn::split_channels(dcat, up_ch, dup, dskip);
    for (std::size_t i = 0; i < dskip.size(); ++i) dfeats[3 - j].v[i] += dskip.v[i];
    d = nn::upsample_nearest2x_backward(dup);
  }
  for (std::size_t i = 0; i < d.size(); ++i) dfeats[4].v[i] += d.v[i];
}

template <typename T>
void SegNet<T>::backward(const Trace& tr, const DenseMapStack& out, const MapGrads& g) {
  const std::size_t n = out.pixels();
  const int H = out.height, W = out.width;

  nn::Tensor<T> dinst(3, H, W);
  const T* ih = tr.inst.head.v.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double t = out.offset[k * n + i] / out.offset_bound;
      dinst.v[k * n + i] = static_cast<T>(g.offset[k * n + i] * out.offset_bound * (1.0 - t * t));
    }
    const double raw = static_cast<double>(ih[2 * n + i]);
    const bool clamped = raw < -kSigmaRawClamp || raw > kSigmaRawClamp;
    dinst.v[2 * n + i] = clamped ? T(0) : static_cast<T>(g.sigma[i] * out.sigma[i]);
  }

  nn::Tensor<T> dseed(cfg_.seed_channels(), H, W);
  if (cfg_.seed_mode == SeedMode::kSemantic) {
    const int C = cfg_.num_classes;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0;
      for (int c = 0; c < C; ++c) dot += g.seed[c * n + i] * out.seed[c * n + i];
      for (int c = 0; c < C; ++c)
        dseed.v[c * n + i] = static_cast<T>(out.seed[c * n + i] * (g.seed[c * n + i] - dot));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 1; c < cfg_.num_classes; ++c) {
        const double s = out.seed[c * n + i];
        dseed.v[(c - 1) * n + i] = static_cast<T>(g.seed[c * n + i] * s * (1.0 - s));
      }
  }

  std::vector<nn::Tensor<T>> dfeats;
  for (const auto& f : tr.feats) dfeats.emplace_back(f.c, f.h, f.w);
  backward_decoder(inst_, tr.inst, dinst, dfeats);
  backward_decoder(seed_, tr.seed, dseed, dfeats);

  for (int s = 3; s >= 0; --s) {
    nn::Tensor<T>& df = dfeats[s + 1];
    nn::leaky_relu_backward_inplace(tr.feats[s + 1].v, df.v);
    nn::Tensor<T> da;
    res_b_[s].backward(tr.res_a[s], tr.cols[3 + 3 * s], df, &da);
    nn::leaky_relu_backward_inplace(tr.res_a[s].v, da.v);
    nn::Tensor<T> dd;
    res_a_[s].backward(tr.down[s], tr.cols[2 + 3 * s], da, &dd);
    for (std::size_t i = 0; i < dd.size(); ++i) dd.v[i] += df.v[i];
    nn::leaky_relu_backward_inplace(tr.down[s].v, dd.v);
    nn::Tensor<T> dprev;
    down_[s].backward(tr.feats[s], tr.cols[1 + 3 * s], dd, &dprev);
    for (std::size_t i = 0; i < dprev.size(); ++i) dfeats[s].v[i] += dprev.v[i];
  }
  nn::leaky_relu_backward_inplace(tr.feats[0].v, dfeats[0].v);
  stem_.backward(tr.input, tr.cols[0], dfeats[0], nullptr);
}

template class SegNet<float>;
template class SegNet<double>;

}  // namespace segtrack
