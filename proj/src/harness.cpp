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

#include "segtrack/harness.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "segtrack/errors.hpp"

namespace segtrack {

namespace fs = std::filesystem;

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream os;
  for (unsigned char b : digest) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return os.str();
}

std::string git_blob_hash(const std::string& content) {
  std::string buf = "blob " + std::to_string(content.size());
  buf.push_back('\0');
  buf += content;
  return sha1_hex(buf);
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string file_blob_hash(const std::string& path) { return git_blob_hash(read_file(path)); }

std::string directory_hash(const std::string& dir, const std::vector<std::string>& exclude) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (std::any_of(exclude.begin(), exclude.end(), [&](const std::string& suffix) { return name.ends_with(suffix); }))
      continue;
    entries.emplace_back(fs::relative(e.path(), dir).generic_string(), file_blob_hash(e.path().string()));
  }
  std::sort(entries.begin(), entries.end());
  std::string listing;
  for (const auto& [rel, h] : entries) listing += h + " " + rel + "\n";
  return sha1_hex(listing);
}

// ---------------------------------------------------------------------------

std::string AblationSpec::name() const {
  if (!two_x && !sem && !cp && !sep) return "baseline";
  if (two_x && !sem && !cp && !sep) return "+2X";
  if (two_x && sem && !cp && !sep) return "+Sem";
  if (two_x && sem && cp && !sep) return "+CP";
  if (two_x && sem && cp && sep) return "+Sep";
  return flags();
}

std::string AblationSpec::flags() const {
  std::string s;
  auto add = [&](bool on, const char* f) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += f;
  };
  add(two_x, "2x");
  add(sem, "sem");
  add(cp, "cp");
  add(sep, "sep");
  return s.empty() ? "none" : s;
}

AblationSpec AblationSpec::parse(const std::string& flags) {
  AblationSpec a;
  if (flags.empty() || flags == "none") return a;
  std::stringstream ss(flags);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok == "2x")
      a.two_x = true;
    else if (tok == "sem")
      a.sem = true;
    else if (tok == "cp")
      a.cp = true;
    else if (tok == "sep")
      a.sep = true;
    else
      throw ConfigError("unknown ablation flag '" + tok + "' (expected 2x, sem, cp, sep)");
  }
  return a;
}

std::vector<AblationSpec> standard_ablation_rows() {
  return {{false, false, false, false},
          {true, false, false, false},
          {true, true, false, false},
          {true, true, true, false},
          {true, true, true, true}};
}

AblationSpec parse_row_name(const std::string& name) {
  for (const auto& r : standard_ablation_rows())
    if (r.name() == name) return r;
  return AblationSpec::parse(name);
}

const ReferenceRow kReferenceAblation[4] = {
    {"+2X", 86.12}, {"+Sem", 86.34}, {"+CP", 86.37}, {"+Sep", 86.81}};

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.seg.upsample_factor = 2;
  c.seg.seed_mode = SeedMode::kSemantic;
  c.segtrain.copy_paste = true;
  c.embtrain.multistage = true;
  c.pipeline.cluster.seed_threshold = 0.5;
  c.pipeline.cluster.assign_threshold = 0.1;
  c.pipeline.cluster.min_pixels = c.min_area * 4;
  return c;
}

ExperimentConfig ExperimentConfig::with(const AblationSpec& spec) const {
  ExperimentConfig c = *this;
  c.seg.upsample_factor = spec.two_x ? 2 : 1;
  c.seg.seed_mode = spec.sem ? SeedMode::kSemantic : SeedMode::kGaussian;
  c.segtrain.copy_paste = spec.cp;
  c.embtrain.multistage = spec.sep;
  c.pipeline.cluster.min_pixels = c.min_area * c.seg.upsample_factor * c.seg.upsample_factor;
  return c;
}

AblationSpec ExperimentConfig::spec() const {
  return {seg.upsample_factor == 2, seg.seed_mode == SeedMode::kSemantic, segtrain.copy_paste,
          embtrain.multistage};
}

PipelineConfig ExperimentConfig::pipeline_for(int upsample_factor) const {
  PipelineConfig p = pipeline;
  p.cluster.min_pixels = min_area * upsample_factor * upsample_factor;
  return p;
}

void ExperimentConfig::validate() const {
  seg.validate();
  segtrain.validate(seg);
  embtrain.validate();
  pipeline_for(seg.upsample_factor).validate();
  if (min_area < 1) throw ConfigError("experiment.min_area must be >= 1");
  if (gate_pairs < 10) throw ConfigError("experiment.gate_pairs must be >= 10");
  if (gate_max_gap < 1) throw ConfigError("experiment.gate_max_gap must be >= 1");
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv = seg.to_kv();
  kv.merge(segtrain.to_kv());
  kv.merge(embed.to_kv());
  kv.merge(embtrain.to_kv());
  kv.merge(pipeline_for(seg.upsample_factor).to_kv());
  kv.set("experiment.min_area", min_area);
  kv.set("experiment.calibrate_gate", calibrate_gate);
  kv.set("experiment.gate_pairs", gate_pairs);
  kv.set("experiment.gate_max_gap", gate_max_gap);
  return kv;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  const KeyValueConfig reference = defaults().to_kv();
  std::vector<std::string> known;
  for (const auto& [k, v] : reference.values()) known.push_back(k);
  kv.require_known(known);

  ExperimentConfig c = defaults();
  KeyValueConfig full = c.to_kv();
  full.merge(kv);
  c.seg = SegNetConfig::from_kv(full);
  c.segtrain = SegTrainConfig::from_kv(full);
  c.embed = EmbedNetConfig::from_kv(full);
  c.embtrain = EmbedTrainConfig::from_kv(full);
  c.pipeline = PipelineConfig::from_kv(full);
  c.min_area = static_cast<int>(full.get_int("experiment.min_area", c.min_area));
  c.calibrate_gate = full.get_bool("experiment.calibrate_gate", c.calibrate_gate);
  c.gate_pairs = static_cast<int>(full.get_int("experiment.gate_pairs", c.gate_pairs));
  c.gate_max_gap = static_cast<int>(full.get_int("experiment.gate_max_gap", c.gate_max_gap));
  if (kv.has("cluster.min_pixels")) {
    const int f = c.seg.upsample_factor;
    if (c.pipeline.cluster.min_pixels != c.min_area * f * f)
      throw ConfigError("cluster.min_pixels follows experiment.min_area * upsample_factor^2 (" +
                        std::to_string(c.min_area * f * f) + "); set experiment.min_area instead");
  }
  if (kv.has("track.max_distance") && !kv.has("experiment.calibrate_gate")) c.calibrate_gate = false;
  c.pipeline.cluster.min_pixels = c.min_area * c.seg.upsample_factor * c.seg.upsample_factor;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void RunManifest::add_input_file(const std::string& label, const std::string& path) {
  inputs.emplace_back(label, path + " " + file_blob_hash(path));
}

void RunManifest::add_input_dir(const std::string& label, const std::string& path) {
  inputs.emplace_back(label, path + " " + directory_hash(path));
}

std::string RunManifest::to_text() const {
  std::ostringstream os;
  os << "manifest.command=" << command << "\n";
  os << "manifest.config_sha1=" << config_hash() << "\n";
  os << "manifest.seed=" << seed << "\n";
  for (const auto& [k, v] : inputs) os << "input." << k << "=" << v << "\n";
  for (const auto& [k, v] : outputs) os << "output." << k << "=" << v << "\n";
  for (const auto& [k, v] : config.values()) os << "config." << k << "=" << v << "\n";
  for (const auto& [k, v] : results.values()) os << "result." << k << "=" << v << "\n";
  return os.str();
}

void RunManifest::write(const std::string& path) const { write_file(path, to_text()); }

KeyValueConfig RunManifest::read(const std::string& path) { return KeyValueConfig::load(path); }

// ---------------------------------------------------------------------------

std::string seg_cache_key(const std::string& data_hash, const ExperimentConfig& cfg) {
  KeyValueConfig kv = cfg.seg.to_kv();
  kv.merge(cfg.segtrain.to_kv());
  return sha1_hex("segnet\n" + data_hash + "\n" + kv.to_text());
}

std::string embed_cache_key(const std::string& data_hash, const ExperimentConfig& cfg) {
  KeyValueConfig kv = cfg.embed.to_kv();
  kv.merge(cfg.embtrain.to_kv());
  kv.set("experiment.calibrate_gate", cfg.calibrate_gate);
  kv.set("experiment.gate_pairs", cfg.gate_pairs);
  kv.set("experiment.gate_max_gap", cfg.gate_max_gap);
  kv.set("pipeline.N_f", cfg.pipeline.clouds.num_fg);
  kv.set("pipeline.N_e", cfg.pipeline.clouds.num_env);
  kv.set("pipeline.enlargement", cfg.pipeline.clouds.enlargement);
  kv.set("pipeline.seed", static_cast<long long>(cfg.pipeline.seed));
  if (!cfg.calibrate_gate) kv.set("track.max_distance", cfg.pipeline.tracker.max_distance);
  return sha1_hex("embednet\n" + data_hash + "\n" + kv.to_text());
}

SegNet<float> cached_segnet(const std::string& cache_dir, const std::string& data_hash, const ExperimentConfig& cfg,
                            const std::vector<Sequence>& train, const LogFn& log, bool* from_cache) {
  std::string path;
  if (!cache_dir.empty()) {
    path = cache_dir + "/segnet-" + seg_cache_key(data_hash, cfg) + ".ckpt";
    if (fs::exists(path)) {
      if (log) log("segnet: cached " + path);
      if (from_cache) *from_cache = true;
      return load_segnet(path);
    }
  }
  if (from_cache) *from_cache = false;
  SegNet<float> net = train_segnet(cfg.seg, cfg.segtrain, train, nullptr, [&](const SegEpochLog& e) {
    if (!log) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "segnet: epoch %d loss %.4f (seed %.4f inst %.4f) pastes %d %.1fs", e.epoch,
                  e.loss, e.seed_loss, e.inst_loss, e.pastes, e.seconds);
    log(buf);
  });
  if (!path.empty()) {
    fs::create_directories(cache_dir);
    const std::string tmp = path + ".tmp";
    save_segnet(tmp, net, cfg.segtrain.to_kv());
    fs::rename(tmp, path);
  }
  return net;
}

namespace {

KeyValueConfig stage_kv(const std::vector<EmbedStageLog>& stages) {
  KeyValueConfig kv;
  kv.set("stages.count", static_cast<int>(stages.size()));
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "stage." + std::to_string(i + 1) + ".";
    const auto& s = stages[i];
    kv.set(p + "branches", s.name);
    kv.set(p + "S", s.S);
    kv.set(p + "iterations", s.iterations);
    kv.set(p + "first_loss", s.first_loss);
    kv.set(p + "last_loss", s.last_loss);
    kv.set(p + "frozen_before", std::to_string(s.frozen_before));
    kv.set(p + "frozen_after", std::to_string(s.frozen_after));
    kv.set(p + "seconds", s.seconds);
  }
  return kv;
}

std::vector<EmbedStageLog> stages_from_kv(const KeyValueConfig& kv) {
  std::vector<EmbedStageLog> out;
  const int n = static_cast<int>(kv.get_int("stages.count", 0));
  for (int i = 1; i <= n; ++i) {
    const std::string p = "stage." + std::to_string(i) + ".";
    EmbedStageLog s;
    s.name = kv.get_string(p + "branches", "");
    s.S = static_cast<int>(kv.get_int(p + "S", 0));
    s.iterations = static_cast<int>(kv.get_int(p + "iterations", 0));
    s.first_loss = kv.get_double(p + "first_loss", 0.0);
    s.last_loss = kv.get_double(p + "last_loss", 0.0);
    s.frozen_before = std::stoull(kv.get_string(p + "frozen_before", "0"));
    s.frozen_after = std::stoull(kv.get_string(p + "frozen_after", "0"));
    s.seconds = kv.get_double(p + "seconds", 0.0);
    out.push_back(s);
  }
  return out;
}

}  // namespace

KeyValueConfig embed_model_kv(const EmbedModel& m) {
  KeyValueConfig kv = stage_kv(m.stages);
  kv.set("track.max_distance", m.gate);
  return kv;
}

EmbedModel load_embed_model(const std::string& path) {
  KeyValueConfig kv;
  EmbedNet<float> net = load_embednet(path, &kv);
  EmbedModel m{std::move(net), kv.get_double("track.max_distance", TrackerParams{}.max_distance), stages_from_kv(kv)};
  return m;
}

EmbedModel cached_embednet(const std::string& cache_dir, const std::string& data_hash, const ExperimentConfig& cfg,
                           const std::vector<Sequence>& train, const LogFn& log, bool* from_cache) {
  std::string path;
  if (!cache_dir.empty()) {
    path = cache_dir + "/embednet-" + embed_cache_key(data_hash, cfg) + ".ckpt";
    if (fs::exists(path)) {
      if (log) log("embednet: cached " + path);
      if (from_cache) *from_cache = true;
      return load_embed_model(path);
    }
  }
  if (from_cache) *from_cache = false;
  std::vector<EmbedStageLog> stages;
  EmbedNet<float> net =
      run_multistage_training(train, cfg.embed, cfg.embtrain, &stages, [&](const EmbedStageLog& s) {
        if (!log) return;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "embednet: stage %s S=%d iters %d loss %.4f -> %.4f %.1fs", s.name.c_str(),
                      s.S, s.iterations, s.first_loss, s.last_loss, s.seconds);
        log(buf);
      });
  double gate = cfg.pipeline.tracker.max_distance;
  if (cfg.calibrate_gate) {
    gate = calibrate_gate(net, train, cfg.gate_pairs, cfg.gate_max_gap, cfg.pipeline.clouds, cfg.embtrain.seed + 1);
    if (log) log("embednet: gate " + format_double(gate));
  }
  EmbedModel m{std::move(net), gate, std::move(stages)};
  if (!path.empty()) {
    fs::create_directories(cache_dir);
    const std::string tmp = path + ".tmp";
    KeyValueConfig extra = cfg.embtrain.to_kv();
    extra.merge(embed_model_kv(m));
    save_embednet(tmp, m.net, extra);
    fs::rename(tmp, path);
  }
  return m;
}

MetricsReport evaluate_model(const SegNet<float>& seg, const EmbedNet<float>& embed, const std::vector<Sequence>& seqs,
                             const PipelineConfig& pipeline, std::vector<MotsAnnotations>* results) {
  MetricsReport total;
  for (const auto& seq : seqs) {
    MotsAnnotations res = run_pipeline(seg, embed, seq, pipeline);
    total.add(evaluate_sequence(annotations_of(seq), res, seq.sequence_id));
    if (results) results->push_back(std::move(res));
  }
  return total;
}

// ---------------------------------------------------------------------------

std::string AblationTable::to_text() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-9s %-3s %-3s %-3s %-3s | %-22s | %-22s | %7s\n", "row", "2X", "Sem", "CP",
                "Sep", "cars sMOTSA MOTSA IDS", "peds sMOTSA MOTSA IDS", "seconds");
  os << buf;
  for (const auto& r : rows) {
    auto mark = [](bool b) { return b ? "x" : "-"; };
    const auto& c = r.report.cars;
    const auto& p = r.report.pedestrians;
    std::snprintf(buf, sizeof(buf), "%-9s %-3s %-3s %-3s %-3s | %6.2f %6.2f %6ld    | %6.2f %6.2f %6ld    | %7.1f\n",
                  r.spec.name().c_str(), mark(r.spec.two_x), mark(r.spec.sem), mark(r.spec.cp), mark(r.spec.sep),
                  100 * c.smotsa(), 100 * c.motsa(), c.ids, 100 * p.smotsa(), 100 * p.motsa(), p.ids, r.seconds);
    os << buf;
  }
  return os.str();
}

std::string AblationTable::to_kv() const {
  std::ostringstream os;
  os << "rows=" << rows.size() << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string p = "row." + std::to_string(i + 1) + ".";
    os << p << "name=" << r.spec.name() << "\n";
    os << p << "flags=" << r.spec.flags() << "\n";
    os << p << "seconds=" << format_double(r.seconds) << "\n";
    std::istringstream is(r.report.to_kv());
    for (std::string line; std::getline(is, line);)
      if (line.rfind("seq.", 0) != 0) os << p << line << "\n";
  }
  return os.str();
}

AblationTable run_ablation(const std::string& data_dir, const std::vector<AblationSpec>& rows,
                           const ExperimentConfig& base, const std::string& out_dir, const std::string& cache_dir,
                           const LogFn& log) {
  if (rows.empty()) throw ConfigError("ablation grid is empty");
  const Dataset data = load_dataset(data_dir);
  if (data.val.empty()) throw DataError("dataset '" + data_dir + "' has no held-out sequences");
  const std::string data_hash = directory_hash(data_dir);
  fs::create_directories(out_dir);

  AblationTable table;
  auto flush = [&](const std::string& failure) {
    std::string kv = table.to_kv();
    std::string text = table.to_text();
    if (!failure.empty()) {
      kv += "failed=" + failure + "\n";
      text += "FAILED: " + failure + "\n";
    }
    write_file(out_dir + "/ablation.txt", text);
    write_file(out_dir + "/ablation.kv", kv);
  };

  for (const auto& spec : rows) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const ExperimentConfig cfg = base.with(spec);
      cfg.validate();
      if (log) log("row " + spec.name() + " (" + spec.flags() + ")");
      SegNet<float> seg = cached_segnet(cache_dir, data_hash, cfg, data.train, log);
      EmbedModel emb = cached_embednet(cache_dir, data_hash, cfg, data.train, log);
      PipelineConfig pipe = cfg.pipeline_for(cfg.seg.upsample_factor);
      pipe.tracker.max_distance = emb.gate;
      AblationRow row;
      row.spec = spec;
      row.report = evaluate_model(seg, emb.net, data.val, pipe);
      row.seconds = seconds_since(t0);
      table.rows.push_back(std::move(row));
      flush("");
    } catch (const std::exception& e) {
      flush(spec.name() + ": " + e.what());
      throw;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

Image render_overlay(const Image& image, const std::vector<InstanceMask>& instances, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ContractViolation("overlay alpha must be in [0, 1]");
  Image out = image;
  for (const auto& inst : instances) {
    if (inst.mask.height() != image.height || inst.mask.width() != image.width)
      throw ContractViolation("overlay mask size differs from the image");
    const int id = inst.track_id.value_or(inst.instance_id);
    std::uint64_t h = (static_cast<std::uint64_t>(inst.class_id) << 32) ^ static_cast<std::uint32_t>(id);
    h = (h ^ (h >> 31)) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
    const double color[3] = {static_cast<double>(64 + (h & 0xbf)), static_cast<double>(64 + ((h >> 8) & 0xbf)),
                             static_cast<double>(64 + ((h >> 16) & 0xbf))};
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        if (!inst.mask.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) {
          const double v = (1.0 - alpha) * image.at(y, x, c) + alpha * color[c];
          out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
        }
      }
  }
  return out;
}

}  // namespace segtrack
