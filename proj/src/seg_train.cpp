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

#include "segtrack/seg_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "segtrack/checkpoint.hpp"
#include "segtrack/errors.hpp"

namespace segtrack {

void SegTrainConfig::validate(const SegNetConfig& net) const {
  if (epochs < 1) throw ConfigError("segtrain: epochs must be >= 1");
  if (batch < 1) throw ConfigError("segtrain: batch must be >= 1");
  if (!(lr > 0) || !(lr_power >= 0)) throw ConfigError("segtrain: lr must be > 0 and lr_power >= 0");
  if (!(w_seed >= 0) || !(w_inst >= 0) || w_seed + w_inst <= 0)
    throw ConfigError("segtrain: loss weights must be >= 0 and not both zero");
  if (!(jitter_gain >= 0 && jitter_gain < 1) || !(jitter_bias >= 0))
    throw ConfigError("segtrain: jitter_gain must be in [0,1) and jitter_bias >= 0");
  if (!(var_weight >= 0)) throw ConfigError("segtrain: var_weight must be >= 0");
  if (crop < 0 || (crop > 0 && crop % net.stride() != 0))
    throw ConfigError("segtrain: crop must be 0 or a multiple of the network stride (" +
                      std::to_string(net.stride()) + ")");
  paste.validate();
}

KeyValueConfig SegTrainConfig::to_kv() const {
  KeyValueConfig kv = paste.to_kv();
  kv.set("segtrain.epochs", epochs);
  kv.set("segtrain.batch", batch);
  kv.set("segtrain.lr", lr);
  kv.set("segtrain.lr_power", lr_power);
  kv.set("segtrain.w_seed", w_seed);
  kv.set("segtrain.w_inst", w_inst);
  kv.set("segtrain.var_weight", var_weight);
  kv.set("segtrain.gaussian_target_gradient", gaussian_target_gradient);
  kv.set("segtrain.flip", flip);
  kv.set("segtrain.color_jitter", color_jitter);
  kv.set("segtrain.jitter_gain", jitter_gain);
  kv.set("segtrain.jitter_bias", jitter_bias);
  kv.set("segtrain.crop", crop);
  kv.set("segtrain.copy_paste", copy_paste);
  kv.set("segtrain.seed", static_cast<long long>(seed));
  return kv;
}

SegTrainConfig SegTrainConfig::from_kv(const KeyValueConfig& kv) {
  SegTrainConfig c;
  c.epochs = static_cast<int>(kv.get_int("segtrain.epochs", c.epochs));
  c.batch = static_cast<int>(kv.get_int("segtrain.batch", c.batch));
  c.lr = kv.get_double("segtrain.lr", c.lr);
  c.lr_power = kv.get_double("segtrain.lr_power", c.lr_power);
  c.w_seed = kv.get_double("segtrain.w_seed", c.w_seed);
  c.w_inst = kv.get_double("segtrain.w_inst", c.w_inst);
  c.var_weight = kv.get_double("segtrain.var_weight", c.var_weight);
  c.gaussian_target_gradient = kv.get_bool("segtrain.gaussian_target_gradient", c.gaussian_target_gradient);
  c.flip = kv.get_bool("segtrain.flip", c.flip);
  c.color_jitter = kv.get_bool("segtrain.color_jitter", c.color_jitter);
  c.jitter_gain = kv.get_double("segtrain.jitter_gain", c.jitter_gain);
  c.jitter_bias = kv.get_double("segtrain.jitter_bias", c.jitter_bias);
  c.crop = static_cast<int>(kv.get_int("segtrain.crop", c.crop));
  c.copy_paste = kv.get_bool("segtrain.copy_paste", c.copy_paste);
  c.seed = static_cast<std::uint64_t>(kv.get_int("segtrain.seed", static_cast<long long>(c.seed)));
  c.paste = PasteConfig::from_kv(kv);
  return c;
}

Image flip_image(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

Image jitter_colors(const Image& img, double gain, double bias, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> g(1.0 - gain, 1.0 + gain), b(-bias, bias);
  int perm[3] = {0, 1, 2};
  std::shuffle(perm, perm + 3, rng);
  double scale[3], shift[3];
  for (int c = 0; c < 3; ++c) {
    scale[c] = g(rng);
    shift[c] = b(rng);
  }
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(y, x, perm[c]) * scale[c] + shift[c];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

Mask flip_mask(const Mask& m) {
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(y, x)) out.set(y, m.width() - 1 - x);
  return out;
}

Image crop_image(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) throw ContractViolation("crop_image: out of range");
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Mask crop_mask(const Mask& m, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > m.height() || x0 + w > m.width()) throw ContractViolation("crop_mask: out of range");
  Mask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m.at(y0 + y, x0 + x)) out.set(y, x);
  return out;
}

SegLoss seg_sample_loss(const SegNetConfig& net, const SegTrainConfig& train, const DenseMapStack& out,
                        const SegSample& sample, MapGrads* grad) {
  SegLoss l;
  const Mask* ignore = sample.ignore ? &*sample.ignore : nullptr;
  if (train.w_seed > 0) {
    MapGrads g(out);
    if (net.seed_mode == SeedMode::kSemantic) {
      const LabelGrid labels = make_label_grid(sample.instances, out.height, out.width, sample.ignore);
      l.seed = focal_seed_loss(out, labels, net.focal_gamma, grad ? &g : nullptr);
    } else {
      GaussianSeedOptions opt;
      opt.fg_weight = net.seed_fg_weight;
      opt.bg_weight = net.seed_bg_weight;
      opt.target_gradient = train.gaussian_target_gradient;
      l.seed = gaussian_seed_loss(out, sample.instances, opt, ignore, grad ? &g : nullptr);
    }
    if (grad) grad->add(g, train.w_seed);
  }
  if (train.w_inst > 0 && !sample.instances.empty()) {
    MapGrads g(out);
    ClusterLossOptions opt;
    opt.var_weight = train.var_weight;
    l.inst = instance_cluster_loss(out, sample.instances, opt, ignore, grad ? &g : nullptr);
    if (grad) grad->add(g, train.w_inst);
  }
  l.total = train.w_seed * l.seed + train.w_inst * l.inst;
  return l;
}

namespace {

SegSample make_sample(const Frame& frame, const FrameAnnotation& ann, const SegNetConfig& net,
                      const SegTrainConfig& cfg, const InstanceDB& db, std::mt19937_64& rng, int& pastes) {
  Frame f = frame;
  FrameAnnotation a = ann;
  if (cfg.copy_paste) {
    PasteResult r = copy_paste(f, a, db, cfg.paste, rng);
    for (const auto& e : r.events) pastes += e.pasted;
    f = std::move(r.frame);
    a = std::move(r.annotation);
  }
  if (cfg.flip && (rng() & 1)) {
    f.image = flip_image(f.image);
    for (auto& im : a.instances) im.mask = flip_mask(im.mask);
    if (a.ignore) a.ignore = flip_mask(*a.ignore);
  }
  if (cfg.color_jitter) f.image = jitter_colors(f.image, cfg.jitter_gain, cfg.jitter_bias, rng);
  f = upsample_input(f, net.upsample_factor);
  a = upsample_annotation(a, net.upsample_factor);
  SegSample s;
  const int H = f.height(), W = f.width();
  if (cfg.crop > 0 && (cfg.crop < H || cfg.crop < W)) {
    const int ch = std::min(cfg.crop, H), cw = std::min(cfg.crop, W);
    const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(H - ch + 1));
    const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(W - cw + 1));
    s.image = crop_image(f.image, y0, x0, ch, cw);
    for (auto& im : a.instances) {
      im.mask = crop_mask(im.mask, y0, x0, ch, cw);
      if (im.mask.any()) s.instances.push_back(std::move(im));
    }
    if (a.ignore) s.ignore = crop_mask(*a.ignore, y0, x0, ch, cw);
  } else {
    s.image = std::move(f.image);
    s.instances = std::move(a.instances);
    s.ignore = std::move(a.ignore);
  }
  return s;
}

}  // namespace

SegNet<float> train_segnet(const SegNetConfig& net_cfg, const SegTrainConfig& cfg, const std::vector<Sequence>& train,
                           std::vector<SegEpochLog>* log, const SegProgress& progress) {
  net_cfg.validate();
  cfg.validate(net_cfg);
  std::vector<std::pair<int, int>> frames;
  for (std::size_t s = 0; s < train.size(); ++s)
    for (std::size_t t = 0; t < train[s].frames.size(); ++t) frames.emplace_back(static_cast<int>(s), static_cast<int>(t));
  if (frames.empty()) throw DataError("train_segnet: no training frames");
  InstanceDB db;
  if (cfg.copy_paste) {
    db = build_instance_db(train);
    if (db.empty()) throw DataError("train_segnet: copy-paste enabled but the training set has no pedestrians");
  }

  nn::FlushDenormals ftz;
  SegNet<float> net(net_cfg);
  nn::Adam<float> adam(net.params(), nn::AdamOptions{cfg.lr});
  std::mt19937_64 rng(cfg.seed);
  const long steps_per_epoch = (static_cast<long>(frames.size()) + cfg.batch - 1) / cfg.batch;
  const long total_steps = steps_per_epoch * cfg.epochs;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(frames.begin(), frames.end(), rng);
    SegEpochLog el;
    el.epoch = epoch;
    for (std::size_t b = 0; b < frames.size(); b += cfg.batch) {
      const std::size_t e = std::min(frames.size(), b + cfg.batch);
      net.params().zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const auto [si, ti] = frames[k];
        SegSample s = make_sample(train[si].frames[ti], train[si].annotations[ti], net_cfg, cfg, db, rng, el.pastes);
        SegNet<float>::Trace trace;
        DenseMapStack out = net.forward(s.image, &trace);
        MapGrads g(out);
        const SegLoss l = seg_sample_loss(net_cfg, cfg, out, s, &g);
        if (!std::isfinite(l.total)) throw DataError("train_segnet: non-finite loss at epoch " + std::to_string(epoch));
        el.loss += l.total;
        el.seed_loss += l.seed;
        el.inst_loss += l.inst;
        net.backward(trace, out, g);
      }
      adam.set_lr(cfg.lr * std::pow(1.0 - static_cast<double>(step) / total_steps, cfg.lr_power));
      adam.step(1.0 / static_cast<double>(e - b));
      ++step;
    }
    const double n = static_cast<double>(frames.size());
    el.loss /= n;
    el.seed_loss /= n;
    el.inst_loss /= n;
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) log->push_back(el);
    if (progress) progress(el);
  }
  return net;
}

void save_segnet(const std::string& path, const SegNet<float>& net, const KeyValueConfig& extra) {
  KeyValueConfig kv = extra;
  kv.merge(net.config().to_kv());
  save_checkpoint(path, "segnet", kv, net.params());
}

SegNet<float> load_segnet(const std::string& path) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.kind != "segnet") throw FormatError(path + ": checkpoint kind is '" + h.kind + "', expected segnet");
  SegNet<float> net(SegNetConfig::from_kv(h.config));
  load_checkpoint(path, net.params());
  return net;
}

namespace {

Image pad_image(const Image& img, int h, int w) {
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(std::min(y, img.height - 1), std::min(x, img.width - 1), c);
  return out;
}

DenseMapStack crop_stack(const DenseMapStack& s, int h, int w) {
  if (s.height == h && s.width == w) return s;
  DenseMapStack out(s.num_classes, h, w, s.offset_bound);
  const std::size_t P = s.pixels(), Q = out.pixels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * s.width + x, j = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < s.num_classes; ++c) out.seed[c * Q + j] = s.seed[c * P + i];
      out.sigma[j] = s.sigma[i];
      out.offset[j] = s.offset[i];
      out.offset[Q + j] = s.offset[P + i];
    }
  return out;
}

}  // namespace

InstanceSegmentation segment_frame(const SegNet<float>& net, const Frame& frame, const ClusterParams& params) {
  nn::FlushDenormals ftz;
  const int factor = net.config().upsample_factor, stride = net.config().stride();
  const Frame up = upsample_input(frame, factor);
  const int H = up.height(), W = up.width();
  const int PH = (H + stride - 1) / stride * stride, PW = (W + stride - 1) / stride * stride;
  DenseMapStack out = net.forward(PH == H && PW == W ? up.image : pad_image(up.image, PH, PW));
  InstanceSegmentation seg = cluster_instances(crop_stack(out, H, W), params);
  seg.frame_index = frame.frame_index;
  seg.instances = downsample_instances(seg.instances, factor);
  return seg;
}

}  // namespace segtrack
