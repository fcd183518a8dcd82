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

#include "segtrack/embed_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "segtrack/checkpoint.hpp"
#include "segtrack/errors.hpp"

namespace segtrack {

TrackDB build_track_db(const std::vector<Sequence>& sequences) {
  TrackDB db;
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    for (std::size_t t = 0; t < seq.annotations.size(); ++t) {
      const auto& inst = seq.annotations[t].instances;
      for (std::size_t k = 0; k < inst.size(); ++k) {
        if (!inst[k].track_id) continue;
        const auto key = std::make_pair(static_cast<int>(s), *inst[k].track_id);
        auto it = index.find(key);
        if (it == index.end()) {
          it = index.emplace(key, db.tracks.size()).first;
          TrackRecord r;
          r.sequence = static_cast<int>(s);
          r.track_id = *inst[k].track_id;
          r.class_id = inst[k].class_id;
          db.tracks.push_back(r);
        }
        db.tracks[it->second].frames.push_back(static_cast<int>(t));
        db.tracks[it->second].instances.push_back(static_cast<int>(k));
      }
    }
  }
  return db;
}

namespace {

// Positions p in r.frames with frames p, p+s, p+2s present.
std::vector<int> anchors_for(const TrackRecord& r, int s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < r.frames.size(); ++i) {
    const int t = r.frames[i];
    const auto j = std::lower_bound(r.frames.begin(), r.frames.end(), t + s);
    const auto k = std::lower_bound(r.frames.begin(), r.frames.end(), t + 2 * s);
    if (j != r.frames.end() && *j == t + s && k != r.frames.end() && *k == t + 2 * s) out.push_back(static_cast<int>(i));
  }
  return out;
}

int position_of(const TrackRecord& r, int frame) {
  return static_cast<int>(std::lower_bound(r.frames.begin(), r.frames.end(), frame) - r.frames.begin());
}

int uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

}  // namespace

std::vector<TrainingCrop> sample_training_batch(const TrackDB& db, int D, int S, std::mt19937_64& rng) {
  if (D < 1 || S < 1) throw ContractViolation("sample_training_batch: need D >= 1 and S >= 1");
  // valid spacings per qualifying track
  std::vector<int> qualifying;
  std::vector<std::vector<int>> valid(db.tracks.size());
  for (std::size_t i = 0; i < db.tracks.size(); ++i) {
    for (int s = 1; s <= S; ++s)
      if (!anchors_for(db.tracks[i], s).empty()) valid[i].push_back(s);
    if (!valid[i].empty()) qualifying.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(qualifying.size()) < D)
    throw ContractViolation("sample_training_batch: only " + std::to_string(qualifying.size()) +
                            " tracks have three equally spaced occurrences, need " + std::to_string(D));
  std::vector<TrainingCrop> batch;
  for (int d = 0; d < D; ++d) {
    const int pick = d + uniform_index(rng, qualifying.size() - d);
    std::swap(qualifying[d], qualifying[pick]);
    const int ti = qualifying[d];
    const TrackRecord& r = db.tracks[ti];
    int s = std::uniform_int_distribution<int>(1, S)(rng);
    const auto& v = valid[ti];
    if (!std::binary_search(v.begin(), v.end(), s)) {
      // largest valid spacing below s, else the smallest above it
      auto it = std::lower_bound(v.begin(), v.end(), s);
      s = it == v.begin() ? *it : *(it - 1);
    }
    const auto anchors = anchors_for(r, s);
    const int t = r.frames[anchors[uniform_index(rng, anchors.size())]];
    for (int k = 0; k < 3; ++k) {
      const int p = position_of(r, t + k * s);
      batch.push_back({ti, r.frames[p], r.instances[p], s});
    }
  }
  return batch;
}

void EmbedTrainConfig::validate() const {
  if (D < 2) throw ConfigError("embtrain: D must be >= 2 (the loss needs two track ids)");
  if (crops_per_id != 3) throw ConfigError("embtrain: crops_per_id must be 3");
  for (int s : {S_f, S_e, S_p, S_a, S_joint})
    if (s < 1) throw ConfigError("embtrain: every S must be >= 1");
  if (iterations < 1) throw ConfigError("embtrain: iterations must be >= 1");
  if (!(lr > 0) || !(margin >= 0)) throw ConfigError("embtrain: need lr > 0 and margin >= 0");
  if (clouds.num_fg < 1 || clouds.num_env < 1 || !(clouds.enlargement >= 1.0))
    throw ConfigError("embtrain: need N_f, N_e >= 1 and enlargement >= 1");
  if (multistage) {
    std::string seen;
    std::stringstream ss(stage_order);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.size() != 1 || std::string("fepa").find(item) == std::string::npos || seen.find(item) != std::string::npos)
        throw ConfigError("embtrain: stage_order must list each of f, e, p, a once (got '" + stage_order + "')");
      seen += item;
    }
    if (seen.size() != 4 || seen.back() != 'a')
      throw ConfigError("embtrain: stage order '" + stage_order +
                        "' is invalid; the aggregation stage must come last, after f, e and p");
  }
}

std::vector<StageSpec> EmbedTrainConfig::stages() const {
  validate();
  if (!multistage) return {StageSpec{kAllBranches, kAllBranches, S_joint, iterations}};
  std::vector<StageSpec> out;
  for (char c : stage_order) {
    switch (c) {
      case 'f': out.push_back({kBranchFg, kBranchFg, S_f, iterations}); break;
      case 'e': out.push_back({kBranchEnv, kBranchEnv, S_e, iterations}); break;
      case 'p': out.push_back({kBranchPos, kBranchPos, S_p, iterations}); break;
      case 'a': out.push_back({kAllBranches, kBranchAgg, S_a, iterations}); break;
      default: break;
    }
  }
  return out;
}

KeyValueConfig EmbedTrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("embtrain.D", D);
  kv.set("embtrain.crops_per_id", crops_per_id);
  kv.set("embtrain.multistage", multistage);
  kv.set("embtrain.stage_order", stage_order);
  kv.set("embtrain.S_f", S_f);
  kv.set("embtrain.S_e", S_e);
  kv.set("embtrain.S_p", S_p);
  kv.set("embtrain.S_a", S_a);
  kv.set("embtrain.S_joint", S_joint);
  kv.set("embtrain.iterations", iterations);
  kv.set("embtrain.lr", lr);
  kv.set("embtrain.margin", margin);
  kv.set("embtrain.N_f", clouds.num_fg);
  kv.set("embtrain.N_e", clouds.num_env);
  kv.set("embtrain.enlargement", clouds.enlargement);
  kv.set("embtrain.seed", static_cast<long long>(seed));
  return kv;
}

EmbedTrainConfig EmbedTrainConfig::from_kv(const KeyValueConfig& kv) {
  EmbedTrainConfig c;
  c.D = static_cast<int>(kv.get_int("embtrain.D", c.D));
  c.crops_per_id = static_cast<int>(kv.get_int("embtrain.crops_per_id", c.crops_per_id));
  c.multistage = kv.get_bool("embtrain.multistage", c.multistage);
  c.stage_order = kv.get_string("embtrain.stage_order", c.stage_order);
  c.S_f = static_cast<int>(kv.get_int("embtrain.S_f", c.S_f));
  c.S_e = static_cast<int>(kv.get_int("embtrain.S_e", c.S_e));
  c.S_p = static_cast<int>(kv.get_int("embtrain.S_p", c.S_p));
  c.S_a = static_cast<int>(kv.get_int("embtrain.S_a", c.S_a));
  c.S_joint = static_cast<int>(kv.get_int("embtrain.S_joint", c.S_joint));
  c.iterations = static_cast<int>(kv.get_int("embtrain.iterations", c.iterations));
  c.lr = kv.get_double("embtrain.lr", c.lr);
  c.margin = kv.get_double("embtrain.margin", c.margin);
  c.clouds.num_fg = static_cast<int>(kv.get_int("embtrain.N_f", c.clouds.num_fg));
  c.clouds.num_env = static_cast<int>(kv.get_int("embtrain.N_e", c.clouds.num_env));
  c.clouds.enlargement = kv.get_double("embtrain.enlargement", c.clouds.enlargement);
  c.seed = static_cast<std::uint64_t>(kv.get_int("embtrain.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

std::uint64_t param_digest(const nn::ParamStore<float>& params, unsigned branches) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Branch b : {kBranchFg, kBranchEnv, kBranchPos, kBranchAgg}) {
    if (!(branches & b)) continue;
    const std::string pre = EmbedNet<float>::prefix(b);
    for (const auto& p : params.all()) {
      if (p.name.rfind(pre, 0) != 0) continue;
      const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
      for (std::size_t i = 0; i < p.size() * sizeof(float); ++i) h = (h ^ bytes[i]) * 0x100000001b3ULL;
    }
  }
  return h;
}

PointCloudPair annotated_clouds(const Sequence& seq, int frame, int instance, const PointCloudOptions& opt,
                                std::mt19937_64& rng) {
  const auto& ann = seq.annotations.at(frame);
  const Image& img = seq.frames.at(frame).image;
  const auto labels = label_map(ann.instances, img.height, img.width);
  return build_point_clouds(img, ann.instances.at(instance).mask, labels, opt, rng);
}

EmbedStageLog train_embed_stage(EmbedNet<float>& net, const std::vector<Sequence>& sequences, const TrackDB& db,
                                const StageSpec& spec, const EmbedTrainConfig& cfg, std::mt19937_64& rng) {
  nn::FlushDenormals ftz;
  const auto t0 = std::chrono::steady_clock::now();
  const unsigned frozen = kAllBranches & ~spec.trainable;
  EmbedStageLog log;
  log.name = branch_names(spec.active);
  log.S = spec.S;
  log.iterations = spec.iterations;
  log.frozen_before = param_digest(net.params(), frozen);
  net.set_frozen(kAllBranches, false);
  net.set_frozen(frozen, true);
  nn::Adam<float> adam(net.params(), nn::AdamOptions{cfg.lr});
  const int tenth = std::max(1, spec.iterations / 10);
  for (int it = 0; it < spec.iterations; ++it) {
    const auto batch = sample_training_batch(db, cfg.D, spec.S, rng);
    std::vector<std::vector<double>> emb;
    std::vector<int> labels;
    std::vector<EmbedNet<float>::Trace> traces(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const TrackRecord& r = db.tracks[batch[k].track];
      const PointCloudPair pc = annotated_clouds(sequences[r.sequence], batch[k].frame, batch[k].instance, cfg.clouds, rng);
      emb.push_back(net.forward(pc, spec.active, &traces[k]).m());
      labels.push_back(batch[k].track);
    }
    std::vector<std::vector<double>> grad;
    const double loss = batch_hard_triplet_loss(emb, labels, cfg.margin, &grad);
    net.params().zero_grad();
    for (std::size_t k = 0; k < batch.size(); ++k) net.backward(traces[k], grad[k]);
    adam.step();
    if (it < tenth) log.first_loss += loss / tenth;
    if (it >= spec.iterations - tenth) log.last_loss += loss / tenth;
  }
  net.set_frozen(kAllBranches, false);
  log.frozen_after = param_digest(net.params(), frozen);
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

EmbedNet<float> run_multistage_training(const std::vector<Sequence>& sequences, const EmbedNetConfig& net_cfg,
                                        const EmbedTrainConfig& cfg, std::vector<EmbedStageLog>* log,
                                        const EmbedProgress& progress) {
  const auto stages = cfg.stages();
  const TrackDB db = build_track_db(sequences);
  EmbedNet<float> net(net_cfg);
  std::mt19937_64 rng(cfg.seed);
  for (const auto& spec : stages) {
    EmbedStageLog l = train_embed_stage(net, sequences, db, spec, cfg, rng);
    if (l.frozen_before != l.frozen_after)
      throw ContractViolation("run_multistage_training: frozen parameters changed during stage " + l.name);
    if (log) log->push_back(l);
    if (progress) progress(l);
  }
  return net;
}

namespace {

double embedding_distance_sq(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct Occurrence {
  int track = 0;
  int pos = 0;  // position within the track record
};

std::vector<double> embed_occurrence(const EmbedNet<float>& net, const std::vector<Sequence>& sequences,
                                     const TrackDB& db, Occurrence o, const PointCloudOptions& opt,
                                     std::mt19937_64& rng) {
  const TrackRecord& r = db.tracks[o.track];
  return net.forward(annotated_clouds(sequences[r.sequence], r.frames[o.pos], r.instances[o.pos], opt, rng)).m();
}

// Occurrence of track b closest in time to frame t.
int nearest_position(const TrackRecord& b, int t) {
  int best = 0;
  for (std::size_t i = 0; i < b.frames.size(); ++i)
    if (std::abs(b.frames[i] - t) < std::abs(b.frames[best] - t)) best = static_cast<int>(i);
  return best;
}

}  // namespace

double triplet_accuracy(const EmbedNet<float>& net, const std::vector<Sequence>& sequences, int triplets, int S,
                        const PointCloudOptions& opt, std::uint64_t seed) {
  nn::FlushDenormals ftz;
  const TrackDB db = build_track_db(sequences);
  std::mt19937_64 rng(seed);
  int correct = 0;
  for (int n = 0; n < triplets; ++n) {
    const auto batch = sample_training_batch(db, 2, S, rng);
    const TrackRecord& a = db.tracks[batch[0].track];
    // prefer a negative from the anchor's own sequence
    std::vector<int> same_seq;
    for (std::size_t i = 0; i < db.tracks.size(); ++i)
      if (static_cast<int>(i) != batch[0].track && db.tracks[i].sequence == a.sequence) same_seq.push_back(static_cast<int>(i));
    const int neg = same_seq.empty() ? batch[3].track : same_seq[uniform_index(rng, same_seq.size())];
    const int k = 1 + uniform_index(rng, 2);
    const Occurrence anchor{batch[0].track, position_of(a, batch[0].frame)};
    const Occurrence pos{batch[0].track, position_of(a, batch[k].frame)};
    const Occurrence negative{neg, nearest_position(db.tracks[neg], batch[k].frame)};
    const auto ea = embed_occurrence(net, sequences, db, anchor, opt, rng);
    const auto ep = embed_occurrence(net, sequences, db, pos, opt, rng);
    const auto en = embed_occurrence(net, sequences, db, negative, opt, rng);
    double dp = 0, dn = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) {
      dp += (ea[i] - ep[i]) * (ea[i] - ep[i]);
      dn += (ea[i] - en[i]) * (ea[i] - en[i]);
    }
    correct += dp < dn;
  }
  return triplets > 0 ? static_cast<double>(correct) / triplets : 0.0;
}

double calibrate_gate(const EmbedNet<float>& net, const std::vector<Sequence>& sequences, int pairs, int max_gap,
                      const PointCloudOptions& opt, std::uint64_t seed) {
  nn::FlushDenormals ftz;
  const TrackDB db = build_track_db(sequences);
  if (db.tracks.empty()) throw DataError("calibrate_gate: no annotated tracks");
  std::mt19937_64 rng(seed);
  std::vector<double> pos, neg;
  for (int n = 0; n < pairs; ++n) {
    const int ti = uniform_index(rng, db.tracks.size());
    const TrackRecord& r = db.tracks[ti];
    if (r.frames.size() < 2) continue;
    const int p = uniform_index(rng, r.frames.size() - 1);
    const int gap = 1 + uniform_index(rng, static_cast<std::size_t>(max_gap));
    const int q = std::min(static_cast<int>(r.frames.size()) - 1, position_of(r, r.frames[p] + gap));
    const auto e0 = embed_occurrence(net, sequences, db, {ti, p}, opt, rng);
    pos.push_back(embedding_distance_sq(e0, embed_occurrence(net, sequences, db, {ti, q}, opt, rng)));
    std::vector<int> rivals;
    for (std::size_t i = 0; i < db.tracks.size(); ++i)
      if (static_cast<int>(i) != ti && db.tracks[i].sequence == r.sequence && db.tracks[i].class_id == r.class_id)
        rivals.push_back(static_cast<int>(i));
    if (rivals.empty()) continue;
    const int o = rivals[uniform_index(rng, rivals.size())];
    const Occurrence other{o, nearest_position(db.tracks[o], r.frames[q])};
    neg.push_back(embedding_distance_sq(e0, embed_occurrence(net, sequences, db, other, opt, rng)));
  }
  if (pos.empty()) throw DataError("calibrate_gate: no track has two occurrences");
  for (auto* v : {&pos, &neg})
    for (auto& d : *v) d = std::sqrt(d);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  auto quantile = [](const std::vector<double>& v, double q) {
    return v[std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())))];
  };
  if (neg.empty()) return 2.0 * pos.back();
  return std::max(quantile(neg, 0.05), quantile(pos, 0.95));
}

void save_embednet(const std::string& path, const EmbedNet<float>& net, const KeyValueConfig& extra) {
  KeyValueConfig kv = extra;
  kv.merge(net.config().to_kv());
  save_checkpoint(path, "embednet", kv, net.params());
}

EmbedNet<float> load_embednet(const std::string& path, KeyValueConfig* config) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.kind != "embednet") throw FormatError(path + ": checkpoint kind is '" + h.kind + "', expected embednet");
  EmbedNet<float> net(EmbedNetConfig::from_kv(h.config));
  load_checkpoint(path, net.params());
  if (config) *config = h.config;
  return net;
}

}  // namespace segtrack
