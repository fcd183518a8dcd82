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

#include "segtrack/mots_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "segtrack/errors.hpp"
#include "segtrack/image_io.hpp"
#include "segtrack/rle.hpp"

namespace fs = std::filesystem;

namespace segtrack {

namespace {

bool parse_int(std::string_view tok, int& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

}  // namespace

MotsRecord parse_mots_line(const std::string& line, const std::string& file, std::size_t line_no) {
  std::istringstream is(line);
  std::vector<std::string> tok;
  for (std::string t; is >> t;) tok.push_back(t);
  if (tok.size() != 6)
    throw ParseError(file, line_no, "expected 6 fields, got " + std::to_string(tok.size()));
  MotsRecord r;
  int* fields[] = {&r.frame, &r.object_id, &r.class_id, &r.height, &r.width};
  const char* names[] = {"frame", "object id", "class id", "image height", "image width"};
  for (int i = 0; i < 5; ++i) {
    if (!parse_int(tok[i], *fields[i]))
      throw ParseError(file, line_no, std::string("invalid ") + names[i] + " '" + tok[i] + "'");
  }
  if (r.frame < 0) throw ParseError(file, line_no, "negative frame index");
  if (r.height <= 0 || r.width <= 0) throw ParseError(file, line_no, "non-positive image size");
  if (!is_object_class(r.class_id) && r.class_id != static_cast<int>(ClassId::kIgnore))
    throw ParseError(file, line_no, "unknown class id " + tok[2]);
  r.rle = tok[5];
  return r;
}

std::string format_mots_line(int frame, int object_id, int class_id, const Mask& mask) {
  std::ostringstream os;
  os << frame << ' ' << object_id << ' ' << class_id << ' ' << mask.height() << ' ' << mask.width()
     << ' ' << encode_rle(mask);
  return os.str();
}

std::size_t MotsAnnotations::num_instances() const {
  std::size_t n = 0;
  for (const auto& [f, a] : frames) n += a.instances.size();
  return n;
}

MotsAnnotations load_mots_annotations(const std::string& path, const MotsLoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file '" + path + "'");
  MotsAnnotations out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    MotsRecord r = parse_mots_line(line, path, line_no);
    if (out.height == 0) {
      out.height = r.height;
      out.width = r.width;
    } else if (r.height != out.height || r.width != out.width) {
      std::ostringstream os;
      os << path << ":" << line_no << ": image size " << r.height << "x" << r.width
         << " differs from " << out.height << "x" << out.width << " earlier in the sequence";
      throw FormatError(os.str());
    }
    Mask m;
    try {
      m = decode_rle(r.rle, r.height, r.width);
    } catch (const FormatError& e) {
      throw ParseError(path, line_no, e.what());
    }
    FrameAnnotation& fa = out.frames[r.frame];
    if (r.class_id == static_cast<int>(ClassId::kIgnore)) {
      fa.ignore = fa.ignore ? mask_union(*fa.ignore, m) : m;
      continue;
    }
    if (!m.any()) throw ParseError(path, line_no, "empty object mask");
    InstanceMask im;
    im.mask = std::move(m);
    im.class_id = static_cast<ClassId>(r.class_id);
    im.instance_id = r.object_id;
    im.track_id = r.object_id % 1000;
    if (opts.require_disjoint) {
      for (const auto& other : fa.instances) {
        if (intersection_area(other.mask, im.mask) > 0) {
          std::ostringstream os;
          os << path << ":" << line_no << ": object " << r.object_id << " overlaps object "
             << other.instance_id << " in frame " << r.frame;
          throw FormatError(os.str());
        }
      }
    }
    fa.instances.push_back(std::move(im));
  }
  return out;
}

std::string frame_image_name(int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", frame_index);
  return buf;
}

Sequence load_mots_sequence(const std::string& annotation_path, const std::string& image_dir) {
  MotsAnnotations ann = load_mots_annotations(annotation_path);
  Sequence seq;
  seq.sequence_id = fs::path(annotation_path).stem().string();

  std::vector<int> frame_ids;
  if (!image_dir.empty()) {
    if (!fs::is_directory(image_dir)) throw DataError("image directory '" + image_dir + "' not found");
    for (const auto& entry : fs::directory_iterator(image_dir)) {
      if (entry.path().extension() != ".png") continue;
      int idx = 0;
      if (parse_int(entry.path().stem().string(), idx) && idx >= 0) frame_ids.push_back(idx);
    }
  }
  std::sort(frame_ids.begin(), frame_ids.end());
  for (const auto& [f, a] : ann.frames) {
    if (!std::binary_search(frame_ids.begin(), frame_ids.end(), f))
      throw FormatError(annotation_path + ": frame " + std::to_string(f) + " has no image in '" +
                        image_dir + "'");
  }

  for (int f : frame_ids) {
    Frame fr;
    fr.sequence_id = seq.sequence_id;
    fr.frame_index = f;
    fr.image = read_png((fs::path(image_dir) / frame_image_name(f)).string());
    if (seq.height == 0) {
      seq.height = fr.image.height;
      seq.width = fr.image.width;
    } else if (fr.image.height != seq.height || fr.image.width != seq.width) {
      throw FormatError("frame " + std::to_string(f) + " image size differs within sequence");
    }
    seq.frames.push_back(std::move(fr));
    auto it = ann.frames.find(f);
    seq.annotations.push_back(it == ann.frames.end() ? FrameAnnotation{} : it->second);
  }
  if (ann.height != 0 && seq.height != 0 && (ann.height != seq.height || ann.width != seq.width))
    throw FormatError(annotation_path + ": annotation size differs from image size");
  return seq;
}

int mots_object_id(const InstanceMask& m) {
  const int cls = static_cast<int>(m.class_id);
  if (m.track_id) {
    if (*m.track_id <= 0 || *m.track_id >= 1000)
      throw ContractViolation("track id " + std::to_string(*m.track_id) + " outside 1..999");
    return cls * 1000 + *m.track_id;
  }
  if (m.instance_id >= 1000) return m.instance_id;
  return cls * 1000 + m.instance_id;
}

void write_mots_frame(std::ostream& os, int frame_index, const std::vector<InstanceMask>& instances,
                      const std::optional<Mask>& ignore) {
  for (const auto& im : instances) {
    os << format_mots_line(frame_index, mots_object_id(im), static_cast<int>(im.class_id), im.mask)
       << '\n';
  }
  if (ignore && ignore->any()) {
    os << format_mots_line(frame_index, 10000, static_cast<int>(ClassId::kIgnore), *ignore) << '\n';
  }
}

void write_mots_annotations(const std::string& path, const Sequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    write_mots_frame(out, seq.frames[i].frame_index, seq.annotations[i].instances,
                     seq.annotations[i].ignore);
}

void write_mots_annotations(const std::string& path, const MotsAnnotations& ann) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& [f, a] : ann.frames) write_mots_frame(out, f, a.instances, a.ignore);
}

void write_sequence_images(const std::string& image_dir, const Sequence& seq) {
  fs::create_directories(image_dir);
  for (const auto& fr : seq.frames)
    write_png((fs::path(image_dir) / frame_image_name(fr.frame_index)).string(), fr.image);
}

}  // namespace segtrack
