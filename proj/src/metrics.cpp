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

#include "segtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "segtrack/config.hpp"
#include "segtrack/errors.hpp"

namespace segtrack {

namespace {

int identity_of(const InstanceMask& m) { return m.track_id ? *m.track_id : m.instance_id; }

}  // namespace

FrameMatches match_frame(const std::vector<InstanceMask>& gt, const std::vector<InstanceMask>& hyp,
                         const std::optional<Mask>& ignore, const MatchOptions& opts) {
  for (std::size_t a = 0; a < hyp.size(); ++a) {
    for (std::size_t b = a + 1; b < hyp.size(); ++b) {
      if (!hyp[a].mask.same_shape(hyp[b].mask)) throw DataError("hypothesis masks differ in size");
      const std::size_t overlap = intersection_area(hyp[a].mask, hyp[b].mask);
      if (overlap) {
        throw DataError("overlapping hypotheses: ids " + std::to_string(identity_of(hyp[a])) + " and " +
                        std::to_string(identity_of(hyp[b])) + " share " + std::to_string(overlap) + " pixels");
      }
    }
  }
  FrameMatches out;
  std::vector<char> hyp_used(hyp.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t h = 0; h < hyp.size(); ++h) {
      if (hyp_used[h] || hyp[h].class_id != gt[g].class_id) continue;
      const double iou = mask_iou(gt[g].mask, hyp[h].mask);
      // With disjoint hypotheses at most one can exceed 0.5.
      if (iou > opts.iou_threshold && iou > best_iou) {
        best = static_cast<int>(h);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      hyp_used[best] = 1;
      out.pairs.push_back({static_cast<int>(g), best, best_iou});
    } else {
      out.missed_gt.push_back(static_cast<int>(g));
    }
  }
  for (std::size_t h = 0; h < hyp.size(); ++h) {
    if (hyp_used[h]) continue;
    if (opts.suppress_ignored && ignore) {
      const double inside = static_cast<double>(intersection_area(hyp[h].mask, *ignore));
      if (inside > opts.ignore_overlap * static_cast<double>(hyp[h].mask.area())) {
        out.ignored_hyp.push_back(static_cast<int>(h));
        continue;
      }
    }
    out.false_hyp.push_back(static_cast<int>(h));
  }
  return out;
}

double ClassCounts::motsa() const {
  return static_cast<double>(tp - fp - ids) / static_cast<double>(std::max(num_gt(), 1L));
}

double ClassCounts::smotsa() const {
  return (soft_tp - static_cast<double>(fp + ids)) / static_cast<double>(std::max(num_gt(), 1L));
}

void ClassCounts::add(const ClassCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  ids += o.ids;
  soft_tp += o.soft_tp;
}

ClassCounts MetricsReport::overall() const {
  ClassCounts c = cars;
  c.add(pedestrians);
  return c;
}

const ClassCounts& MetricsReport::for_class(ClassId c) const {
  if (c == ClassId::kCar) return cars;
  if (c == ClassId::kPedestrian) return pedestrians;
  throw ContractViolation("metrics: no counts for class " + std::to_string(static_cast<int>(c)));
}

void MetricsReport::add(const MetricsReport& o) {
  cars.add(o.cars);
  pedestrians.add(o.pedestrians);
  sequences.insert(sequences.end(), o.sequences.begin(), o.sequences.end());
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  char line[160];
  auto row = [&](const char* name, const ClassCounts& c) {
    std::snprintf(line, sizeof line, "%-12s %8.4f %8.4f %6ld %6ld %6ld %6ld %6ld\n", name, c.smotsa(), c.motsa(),
                  c.ids, c.tp, c.fp, c.fn, c.num_gt());
    os << line;
  };
  std::snprintf(line, sizeof line, "%-12s %8s %8s %6s %6s %6s %6s %6s\n", "class", "sMOTSA", "MOTSA", "IDS", "TP",
                "FP", "FN", "GT");
  os << line;
  row("cars", cars);
  row("pedestrians", pedestrians);
  row("all", overall());
  if (sequences.size() > 1) {
    os << "\nper sequence:\n";
    for (const auto& s : sequences) {
      row((s.sequence_id + "/car").c_str(), s.cars);
      row((s.sequence_id + "/ped").c_str(), s.pedestrians);
    }
  }
  return os.str();
}

std::string MetricsReport::to_kv() const {
  std::ostringstream os;
  auto emit = [&](const std::string& prefix, const ClassCounts& c) {
    os << prefix << ".sMOTSA=" << format_double(c.smotsa()) << "\n";
    os << prefix << ".MOTSA=" << format_double(c.motsa()) << "\n";
    os << prefix << ".IDS=" << c.ids << "\n";
    os << prefix << ".TP=" << c.tp << "\n";
    os << prefix << ".FP=" << c.fp << "\n";
    os << prefix << ".FN=" << c.fn << "\n";
    os << prefix << ".soft_TP=" << format_double(c.soft_tp) << "\n";
    os << prefix << ".GT=" << c.num_gt() << "\n";
  };
  emit("cars", cars);
  emit("pedestrians", pedestrians);
  emit("all", overall());
  for (const auto& s : sequences) {
    emit("seq." + s.sequence_id + ".cars", s.cars);
    emit("seq." + s.sequence_id + ".pedestrians", s.pedestrians);
  }
  return os.str();
}

MetricsReport evaluate_sequence(const MotsAnnotations& gt, const MotsAnnotations& hyp, const std::string& sequence_id,
                                const MatchOptions& opts) {
  if (gt.height && hyp.height && (gt.height != hyp.height || gt.width != hyp.width))
    throw DataError("result image size " + std::to_string(hyp.height) + "x" + std::to_string(hyp.width) +
                    " differs from ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  std::set<int> frames;
  for (const auto& [f, _] : gt.frames) frames.insert(f);
  for (const auto& [f, _] : hyp.frames) frames.insert(f);

  MetricsReport::SequenceEntry entry;
  entry.sequence_id = sequence_id;
  // (class, gt identity) -> hypothesis identity at its most recent match
  std::map<std::pair<int, int>, int> last_match;
  static const FrameAnnotation kEmpty;
  for (int f : frames) {
    auto gi = gt.frames.find(f);
    auto hi = hyp.frames.find(f);
    const FrameAnnotation& g = gi == gt.frames.end() ? kEmpty : gi->second;
    const FrameAnnotation& h = hi == hyp.frames.end() ? kEmpty : hi->second;
    const FrameMatches m = match_frame(g.instances, h.instances, g.ignore, opts);
    auto counts = [&](ClassId c) -> ClassCounts& { return c == ClassId::kCar ? entry.cars : entry.pedestrians; };
    for (const auto& p : m.pairs) {
      const InstanceMask& gm = g.instances[p.gt];
      ClassCounts& c = counts(gm.class_id);
      ++c.tp;
      c.soft_tp += p.iou;
      const auto key = std::make_pair(static_cast<int>(gm.class_id), identity_of(gm));
      const int hid = identity_of(h.instances[p.hyp]);
      auto it = last_match.find(key);
      if (it != last_match.end() && it->second != hid) ++c.ids;
      last_match[key] = hid;
    }
    for (int i : m.missed_gt) ++counts(g.instances[i].class_id).fn;
    for (int i : m.false_hyp) ++counts(h.instances[i].class_id).fp;
  }
  MetricsReport r;
  r.cars = entry.cars;
  r.pedestrians = entry.pedestrians;
  r.sequences.push_back(std::move(entry));
  return r;
}

MotsAnnotations annotations_of(const Sequence& seq) {
  MotsAnnotations a;
  a.height = seq.height;
  a.width = seq.width;
  for (std::size_t i = 0; i < seq.frames.size() && i < seq.annotations.size(); ++i)
    a.frames[seq.frames[i].frame_index] = seq.annotations[i];
  return a;
}

}  // namespace segtrack
