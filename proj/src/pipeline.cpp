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

#include "segtrack/pipeline.hpp"

#include "segtrack/errors.hpp"
#include "segtrack/seg_train.hpp"

namespace segtrack {

void PipelineConfig::validate() const {
  cluster.validate();
  tracker.validate();
  if (clouds.num_fg < 1 || clouds.num_env < 1 || !(clouds.enlargement >= 1.0))
    throw ConfigError("pipeline: need N_f, N_e >= 1 and enlargement >= 1");
}

KeyValueConfig PipelineConfig::to_kv() const {
  KeyValueConfig kv = tracker.to_kv();
  kv.set("cluster.seed_threshold", cluster.seed_threshold);
  kv.set("cluster.assign_threshold", cluster.assign_threshold);
  kv.set("cluster.min_pixels", cluster.min_pixels);
  kv.set("cluster.sigma_from", std::string(cluster.sigma_from == SigmaFrom::kSeed ? "seed" : "mean"));
  kv.set("pipeline.N_f", clouds.num_fg);
  kv.set("pipeline.N_e", clouds.num_env);
  kv.set("pipeline.enlargement", clouds.enlargement);
  kv.set("pipeline.seed", static_cast<long long>(seed));
  return kv;
}

PipelineConfig PipelineConfig::from_kv(const KeyValueConfig& kv) {
  PipelineConfig c;
  c.tracker = TrackerParams::from_kv(kv);
  c.cluster.seed_threshold = kv.get_double("cluster.seed_threshold", c.cluster.seed_threshold);
  c.cluster.assign_threshold = kv.get_double("cluster.assign_threshold", c.cluster.assign_threshold);
  c.cluster.min_pixels = static_cast<int>(kv.get_int("cluster.min_pixels", c.cluster.min_pixels));
  const std::string sf = kv.get_string("cluster.sigma_from", "seed");
  if (sf != "seed" && sf != "mean") throw ConfigError("cluster.sigma_from must be seed or mean");
  c.cluster.sigma_from = sf == "seed" ? SigmaFrom::kSeed : SigmaFrom::kMean;
  c.clouds.num_fg = static_cast<int>(kv.get_int("pipeline.N_f", c.clouds.num_fg));
  c.clouds.num_env = static_cast<int>(kv.get_int("pipeline.N_e", c.clouds.num_env));
  c.clouds.enlargement = kv.get_double("pipeline.enlargement", c.clouds.enlargement);
  c.seed = static_cast<std::uint64_t>(kv.get_int("pipeline.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

std::vector<std::vector<double>> embed_instances(const EmbedNet<float>& net, const Image& image,
                                                 const std::vector<InstanceMask>& instances,
                                                 const PointCloudOptions& opt, std::mt19937_64& rng) {
  nn::FlushDenormals ftz;
  const auto labels = label_map(instances, image.height, image.width);
  std::vector<std::vector<double>> out;
  out.reserve(instances.size());
  for (const auto& im : instances) out.push_back(net.forward(build_point_clouds(image, im.mask, labels, opt, rng)).m());
  return out;
}

MotsAnnotations track_segmentations(const EmbedNet<float>& net, const Sequence& seq,
                                    const std::vector<InstanceSegmentation>& segs, const PipelineConfig& cfg) {
  cfg.validate();
  if (segs.size() != seq.frames.size()) throw ContractViolation("track_segmentations: one segmentation per frame");
  MotsAnnotations out;
  out.height = seq.height ? seq.height : (seq.frames.empty() ? 0 : seq.frames.front().height());
  out.width = seq.width ? seq.width : (seq.frames.empty() ? 0 : seq.frames.front().width());
  Tracker tracker(cfg.tracker);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Frame& f = seq.frames[t];
    std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(f.frame_index + 1)));
    const auto emb = embed_instances(net, f.image, segs[t].instances, cfg.clouds, rng);
    std::vector<Detection> dets;
    for (std::size_t k = 0; k < emb.size(); ++k) dets.push_back({segs[t].instances[k], emb[k]});
    const auto ids = tracker.step(f.frame_index, dets);
    FrameAnnotation fa;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      InstanceMask im = segs[t].instances[k];
      im.track_id = ids[k];
      im.instance_id = static_cast<int>(im.class_id) * 1000 + ids[k];
      fa.instances.push_back(std::move(im));
    }
    out.frames[f.frame_index] = std::move(fa);
  }
  return out;
}

std::vector<InstanceSegmentation> segment_sequence(const SegNet<float>& net, const Sequence& seq,
                                                   const ClusterParams& params) {
  std::vector<InstanceSegmentation> segs;
  segs.reserve(seq.frames.size());
  for (const auto& f : seq.frames) segs.push_back(segment_frame(net, f, params));
  return segs;
}

MotsAnnotations run_pipeline(const SegNet<float>& seg, const EmbedNet<float>& embed, const Sequence& seq,
                             const PipelineConfig& cfg) {
  return track_segmentations(embed, seq, segment_sequence(seg, seq, cfg.cluster), cfg);
}

}  // namespace segtrack
