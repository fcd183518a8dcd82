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

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "segtrack/augment.hpp"
#include "segtrack/errors.hpp"
#include "segtrack/harness.hpp"
#include "segtrack/image_io.hpp"
#include "segtrack/mots_io.hpp"

namespace fs = std::filesystem;
using namespace segtrack;

namespace {

std::string g_command;

void log_line(const std::string& s) { std::cerr << s << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// --config file plus --set overrides, applied in that order.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "key=value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one key, e.g. --set segtrain.epochs=10");
  }

  KeyValueConfig kv() const {
    KeyValueConfig kv = file.empty() ? KeyValueConfig() : KeyValueConfig::load(file);
    for (const auto& s : sets) kv.merge(KeyValueConfig::parse(s, "--set"));
    return kv;
  }
};

ExperimentConfig experiment(const ConfigArgs& args, const std::string& ablation) {
  ExperimentConfig cfg = ExperimentConfig::from_kv(args.kv());
  if (!ablation.empty()) cfg = cfg.with(parse_row_name(ablation));
  cfg.validate();
  return cfg;
}

RunManifest new_manifest(std::uint64_t seed) {
  RunManifest m;
  m.command = g_command;
  m.seed = seed;
  return m;
}

const Sequence& find_sequence(const Dataset& ds, const std::string& id) {
  for (const auto* part : {&ds.train, &ds.val})
    for (const auto& s : *part)
      if (s.sequence_id == id) return s;
  throw DataError("no sequence '" + id + "' in the dataset");
}

std::vector<Sequence> select_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "all") {
    std::vector<Sequence> all = ds.train;
    all.insert(all.end(), ds.val.begin(), ds.val.end());
    return all;
  }
  throw ConfigError("--split must be train, val or all");
}

void print_report(const MetricsReport& r) {
  const ClassCounts all = r.overall();
  std::printf("sMOTSA=%.4f\nMOTSA=%.4f\nIDS=%ld\nGT=%ld\n", all.smotsa(), all.motsa(), all.ids, all.num_gt());
  std::printf("cars.sMOTSA=%.4f\ncars.MOTSA=%.4f\ncars.IDS=%ld\n", r.cars.smotsa(), r.cars.motsa(), r.cars.ids);
  std::printf("pedestrians.sMOTSA=%.4f\npedestrians.MOTSA=%.4f\npedestrians.IDS=%ld\n", r.pedestrians.smotsa(),
              r.pedestrians.motsa(), r.pedestrians.ids);
}

void add_report(KeyValueConfig& kv, const MetricsReport& r) {
  kv.merge(KeyValueConfig::parse(r.to_kv(), "report"));
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::string profile = "small";
  long long seed = -1;
  ConfigArgs config;
};

int run_gen(const GenArgs& a) {
  SyntheticConfig base = SyntheticConfig::profile(a.profile);
  KeyValueConfig kv = base.to_kv();
  kv.merge(a.config.kv());
  SyntheticConfig cfg = SyntheticConfig::from_kv(kv);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  write_synthetic_dataset(cfg, a.out);
  RunManifest m = new_manifest(cfg.seed);
  m.config = cfg.to_kv();
  m.outputs.emplace_back("dataset", a.out);
  m.results.set("dataset_sha1", directory_hash(a.out));
  m.write(a.out + "/manifest.txt");
  std::printf("dataset_sha1=%s\n", m.results.get_string("dataset_sha1", "").c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string ablation;
  std::string cache;
  ConfigArgs config;
};

int run_train_seg(const TrainArgs& a) {
  const ExperimentConfig cfg = experiment(a.config, a.ablation);
  const Dataset ds = load_dataset(a.data);
  if (ds.train.empty()) throw DataError("dataset has no training sequences");
  const auto t0 = std::chrono::steady_clock::now();
  bool cached = false;
  SegNet<float> net = cached_segnet(a.cache, a.cache.empty() ? "" : directory_hash(a.data), cfg, ds.train, log_line,
                                    &cached);
  ensure_parent(a.out);
  save_segnet(a.out, net, cfg.segtrain.to_kv());

  RunManifest m = new_manifest(cfg.segtrain.seed);
  m.config = cfg.to_kv();
  m.add_input_dir("data", a.data);
  m.outputs.emplace_back("segnet", a.out);
  m.results.set("from_cache", cached);
  m.results.set("seconds", seconds_since(t0));
  m.results.set("segnet_sha1", file_blob_hash(a.out));
  m.write(a.out + ".manifest.txt");
  return 0;
}

int run_train_embed(const TrainArgs& a) {
  const ExperimentConfig cfg = experiment(a.config, a.ablation);
  const Dataset ds = load_dataset(a.data);
  if (ds.train.empty()) throw DataError("dataset has no training sequences");
  const auto t0 = std::chrono::steady_clock::now();
  bool cached = false;
  EmbedModel model =
      cached_embednet(a.cache, a.cache.empty() ? "" : directory_hash(a.data), cfg, ds.train, log_line, &cached);
  KeyValueConfig extra = cfg.embtrain.to_kv();
  const KeyValueConfig model_kv = embed_model_kv(model);
  extra.merge(model_kv);
  ensure_parent(a.out);
  save_embednet(a.out, model.net, extra);

  RunManifest m = new_manifest(cfg.embtrain.seed);
  m.config = cfg.to_kv();
  m.add_input_dir("data", a.data);
  m.outputs.emplace_back("embednet", a.out);
  m.results.merge(model_kv);
  m.results.set("from_cache", cached);
  std::string schedule;
  for (const auto& s : model.stages) schedule += (schedule.empty() ? "" : ",") + std::to_string(s.S);
  m.results.set("S_schedule", schedule);
  m.results.set("seconds", seconds_since(t0));
  m.results.set("embednet_sha1", file_blob_hash(a.out));
  m.write(a.out + ".manifest.txt");
  return 0;
}

struct TrackArgs {
  std::string data;
  std::string seg;
  std::string embed;
  std::string out;
  std::string split = "val";
  ConfigArgs config;
};

int run_track(const TrackArgs& a) {
  const KeyValueConfig user = a.config.kv();
  const ExperimentConfig cfg = ExperimentConfig::from_kv(user);
  const SegNet<float> seg = load_segnet(a.seg);
  const EmbedModel emb = load_embed_model(a.embed);
  PipelineConfig pipe = cfg.pipeline_for(seg.config().upsample_factor);
  if (!user.has("track.max_distance")) pipe.tracker.max_distance = emb.gate;
  pipe.validate();

  const Dataset ds = load_dataset(a.data);
  const std::vector<Sequence> seqs = select_split(ds, a.split);
  fs::create_directories(a.out);
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m = new_manifest(pipe.seed);
  m.config = pipe.to_kv();
  m.add_input_dir("data", a.data);
  m.add_input_file("segnet", a.seg);
  m.add_input_file("embednet", a.embed);
  for (const auto& seq : seqs) {
    const MotsAnnotations res = run_pipeline(seg, emb.net, seq, pipe);
    const std::string path = a.out + "/" + seq.sequence_id + ".txt";
    write_mots_annotations(path, res);
    m.outputs.emplace_back(seq.sequence_id, path);
    log_line("tracked " + seq.sequence_id + ": " + std::to_string(res.num_instances()) + " masks");
  }
  m.results.set("seconds", seconds_since(t0));
  m.write(a.out + "/manifest.txt");
  return 0;
}

struct EvalArgs {
  std::string gt;
  std::string res;
  std::string data;
  std::string split = "val";
  std::string manifest;
};

int run_eval(const EvalArgs& a) {
  RunManifest m = new_manifest(0);
  MetricsReport report;
  MotsLoadOptions hyp_opts;
  hyp_opts.require_disjoint = false;
  if (!a.gt.empty()) {
    if (!a.data.empty()) throw ConfigError("use either --gt or --data");
    const MotsAnnotations gt = load_mots_annotations(a.gt);
    const MotsAnnotations res = load_mots_annotations(a.res, hyp_opts);
    report = evaluate_sequence(gt, res, fs::path(a.gt).stem().string());
    m.add_input_file("gt", a.gt);
    m.add_input_file("res", a.res);
  } else {
    if (a.data.empty()) throw ConfigError("eval needs --gt or --data");
    const Dataset ds = load_dataset(a.data);
    m.add_input_dir("data", a.data);
    for (const auto& seq : select_split(ds, a.split)) {
      const std::string path = a.res + "/" + seq.sequence_id + ".txt";
      const MotsAnnotations res = load_mots_annotations(path, hyp_opts);
      report.add(evaluate_sequence(annotations_of(seq), res, seq.sequence_id));
      m.add_input_file("res." + seq.sequence_id, path);
    }
  }
  print_report(report);
  add_report(m.results, report);
  std::string manifest = a.manifest;
  if (manifest.empty()) manifest = fs::is_directory(a.res) ? a.res + "/eval.manifest.txt" : a.res + ".eval.manifest.txt";
  m.write(manifest);
  return 0;
}

struct AblateArgs {
  std::string data;
  std::string out;
  std::string cache;
  std::vector<std::string> rows;
  ConfigArgs config;
};

int run_ablate(const AblateArgs& a) {
  const ExperimentConfig cfg = ExperimentConfig::from_kv(a.config.kv());
  std::vector<AblationSpec> rows;
  for (const auto& r : a.rows) rows.push_back(parse_row_name(r));
  if (rows.empty()) rows = standard_ablation_rows();
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m = new_manifest(cfg.segtrain.seed);
  m.config = cfg.to_kv();
  m.add_input_dir("data", a.data);
  const AblationTable table = run_ablation(a.data, rows, cfg, a.out, a.cache, log_line);
  std::printf("%s", table.to_text().c_str());
  m.outputs.emplace_back("table", a.out + "/ablation.txt");
  m.results.merge(KeyValueConfig::parse(table.to_kv(), "ablation"));
  m.results.set("seconds", seconds_since(t0));
  m.write(a.out + "/manifest.txt");
  return 0;
}

struct PreviewArgs {
  std::string data;
  std::string out;
  int count = 8;
  long long seed = 1;
  ConfigArgs config;
};

int run_paste_preview(const PreviewArgs& a) {
  const ExperimentConfig cfg = ExperimentConfig::from_kv(a.config.kv());
  const Dataset ds = load_dataset(a.data);
  const InstanceDB db = build_instance_db(ds.train);
  if (db.empty()) throw DataError("no pedestrian donors in the training split");
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  fs::create_directories(a.out);
  std::mt19937_64 rng(static_cast<std::uint64_t>(a.seed));
  std::ofstream labels(a.out + "/labels.txt");
  RunManifest m = new_manifest(static_cast<std::uint64_t>(a.seed));
  m.config = cfg.segtrain.paste.to_kv();
  m.add_input_dir("data", a.data);
  int pasted = 0, fallback = 0;
  for (int i = 0; i < a.count; ++i) {
    std::uniform_int_distribution<std::size_t> pick_seq(0, ds.train.size() - 1);
    const Sequence& seq = ds.train[pick_seq(rng)];
    std::uniform_int_distribution<std::size_t> pick_frame(0, seq.frames.size() - 1);
    const std::size_t f = pick_frame(rng);
    const PasteResult r = copy_paste(seq.frames[f], seq.annotations[f], db, cfg.segtrain.paste, rng);
    for (const auto& e : r.events) {
      pasted += e.pasted;
      fallback += e.fallback;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    write_png(a.out + "/" + name + "_composite.png", r.frame.image);
    write_png(a.out + "/" + name + "_labels.png", render_overlay(r.frame.image, r.annotation.instances, 0.6));
    write_mots_frame(labels, i, r.annotation.instances, r.annotation.ignore);
    m.outputs.emplace_back(name, seq.sequence_id + " frame " + std::to_string(f));
  }
  m.results.set("pasted", pasted);
  m.results.set("fallback", fallback);
  m.write(a.out + "/manifest.txt");
  std::printf("pasted=%d fallback=%d\n", pasted, fallback);
  return 0;
}

struct RenderArgs {
  std::string data;
  std::string sequence;
  std::string res;
  std::string out;
  double alpha = 0.5;
};

int run_render(const RenderArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const Sequence& seq = find_sequence(ds, a.sequence);
  MotsAnnotations ann;
  if (a.res.empty()) {
    ann = annotations_of(seq);
  } else {
    MotsLoadOptions opts;
    opts.require_disjoint = false;
    ann = load_mots_annotations(a.res, opts);
    if (ann.height && (ann.height != seq.height || ann.width != seq.width))
      throw DataError("result size differs from the sequence frames");
  }
  fs::create_directories(a.out);
  RunManifest m = new_manifest(0);
  m.add_input_dir("data", a.data);
  if (!a.res.empty()) m.add_input_file("res", a.res);
  m.config.set("render.alpha", a.alpha);
  m.config.set("render.sequence", a.sequence);
  for (const auto& frame : seq.frames) {
    auto it = ann.frames.find(frame.frame_index);
    const std::vector<InstanceMask> none;
    const auto& inst = it == ann.frames.end() ? none : it->second.instances;
    write_png(a.out + "/" + frame_image_name(frame.frame_index), render_overlay(frame.image, inst, a.alpha));
  }
  m.results.set("frames", static_cast<int>(seq.frames.size()));
  m.write(a.out + "/manifest.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"segtrack: instance segmentation and tracking on MOTS-format data"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "generate a synthetic dataset");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--profile", gen.profile, "small or tiny")->check(CLI::IsMember({"small", "tiny"}));
  c_gen->add_option("--seed", gen.seed, "generator seed");
  gen.config.add_to(c_gen);

  TrainArgs seg_args, emb_args;
  auto* c_seg = app.add_subcommand("train-seg", "train the segmentation network");
  auto* c_emb = app.add_subcommand("train-embed", "train the tracking embedding (stage by stage)");
  for (auto [c, args] : {std::pair{c_seg, &seg_args}, std::pair{c_emb, &emb_args}}) {
    c->add_option("--data", args->data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    c->add_option("--out", args->out, "checkpoint path")->required();
    c->add_option("--ablation", args->ablation, "row name (baseline, +2X, ...) or flags (2x,sem,cp,sep)");
    c->add_option("--cache", args->cache, "model cache directory shared with ablate");
    args->config.add_to(c);
  }

  TrackArgs trk;
  auto* c_trk = app.add_subcommand("track", "segment and track every sequence of a split");
  c_trk->add_option("--data", trk.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_trk->add_option("--seg", trk.seg, "segmentation checkpoint")->required()->check(CLI::ExistingFile);
  c_trk->add_option("--embed", trk.embed, "embedding checkpoint")->required()->check(CLI::ExistingFile);
  c_trk->add_option("--out", trk.out, "result directory")->required();
  c_trk->add_option("--split", trk.split, "train, val or all");
  trk.config.add_to(c_trk);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "compute MOTS metrics");
  c_ev->add_option("--gt", ev.gt, "ground-truth file")->check(CLI::ExistingFile);
  c_ev->add_option("--res", ev.res, "result file, or result directory with --data")->required()->check(CLI::ExistingPath);
  c_ev->add_option("--data", ev.data, "dataset directory")->check(CLI::ExistingDirectory);
  c_ev->add_option("--split", ev.split, "train, val or all");
  c_ev->add_option("--manifest", ev.manifest, "manifest path");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "train and evaluate ablation rows");
  c_ab->add_option("--data", ab.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_ab->add_option("--out", ab.out, "output directory")->required();
  c_ab->add_option("--cache", ab.cache, "model cache directory");
  c_ab->add_option("--row", ab.rows, "row (repeatable); default: all five");
  ab.config.add_to(c_ab);

  PreviewArgs pv;
  auto* c_pv = app.add_subcommand("paste-preview", "write copy-paste composites of training frames");
  c_pv->add_option("--data", pv.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_pv->add_option("--out", pv.out, "output directory")->required();
  c_pv->add_option("--count", pv.count, "number of composites");
  c_pv->add_option("--seed", pv.seed, "sampling seed");
  pv.config.add_to(c_pv);

  RenderArgs rd;
  auto* c_rd = app.add_subcommand("render", "draw instance overlays for one sequence");
  c_rd->add_option("--data", rd.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_rd->add_option("--sequence", rd.sequence, "sequence id")->required();
  c_rd->add_option("--res", rd.res, "result file (default: ground truth)")->check(CLI::ExistingFile);
  c_rd->add_option("--out", rd.out, "output directory")->required();
  c_rd->add_option("--alpha", rd.alpha, "blend weight")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) return run_gen(gen);
    if (*c_seg) return run_train_seg(seg_args);
    if (*c_emb) return run_train_embed(emb_args);
    if (*c_trk) return run_track(trk);
    if (*c_ev) return run_eval(ev);
    if (*c_ab) return run_ablate(ab);
    if (*c_pv) return run_paste_preview(pv);
    if (*c_rd) return run_render(rd);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
