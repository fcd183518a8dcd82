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

#include "segtrack/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "segtrack/errors.hpp"

namespace segtrack {

namespace {

constexpr const char* kMagic = "segtrack-checkpoint";

std::string shape_text(const std::vector<int>& shape) { return shape.empty() ? "-" : join_ints(shape); }

struct Reader {
  std::ifstream in;
  std::string path;
  std::size_t line_no = 0;

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": truncated checkpoint (expected " + what + ")");
    ++line_no;
    return line;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path, line_no, what); }
};

CheckpointHeader read_header(Reader& r) {
  r.in.open(r.path);
  if (!r.in) throw DataError("cannot open checkpoint '" + r.path + "'");
  CheckpointHeader h;
  std::istringstream first(r.next("header"));
  std::string magic;
  int version = 0;
  if (!(first >> magic >> version >> h.kind) || magic != kMagic || version != 1)
    r.fail("not a segtrack checkpoint (version 1)");
  std::istringstream cfg_line(r.next("config count"));
  std::string tag;
  std::size_t n = 0;
  if (!(cfg_line >> tag >> n) || tag != "config") r.fail("expected 'config <lines>'");
  std::string text;
  for (std::size_t i = 0; i < n; ++i) text += r.next("config line") + "\n";
  h.config = KeyValueConfig::parse(text, r.path);
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const std::string& kind, const KeyValueConfig& config,
                     const nn::ParamStore<T>& params) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  const std::string cfg = config.to_text();
  std::size_t lines = 0;
  for (char c : cfg) lines += c == '\n';
  out << kMagic << " 1 " << kind << "\n" << "config " << lines << "\n" << cfg;
  char buf[40];
  for (const auto& p : params.all()) {
    out << "param " << p.name << " " << shape_text(p.shape) << " " << p.size() << "\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", static_cast<double>(p.value[i]));
      out << buf << ((i + 1) % 8 == 0 || i + 1 == p.size() ? "\n" : " ");
    }
  }
  out << "end\n";
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  Reader r;
  r.path = path;
  return read_header(r);
}

template <typename T>
CheckpointHeader load_checkpoint(const std::string& path, nn::ParamStore<T>& params) {
  Reader r;
  r.path = path;
  CheckpointHeader h = read_header(r);
  std::map<std::string, bool> seen;
  for (;;) {
    const std::string line = r.next("param or end");
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tag, name, shape;
    std::size_t count = 0;
    if (!(ls >> tag >> name >> shape >> count) || tag != "param") r.fail("expected 'param <name> <shape> <count>'");
    nn::Param<T>* p = params.find(name);
    if (!p) throw FormatError(path + ": unexpected parameter '" + name + "'");
    if (shape != shape_text(p->shape) || count != p->size())
      throw FormatError(path + ": shape mismatch for '" + name + "' (file " + shape + ", model " +
                        shape_text(p->shape) + ")");
    std::size_t i = 0;
    while (i < count) {
      std::istringstream vs(r.next("parameter values"));
      std::string tok;
      while (vs >> tok) {
        if (i >= count) r.fail("too many values for '" + name + "'");
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') r.fail("bad value '" + tok + "'");
        p->value[i++] = static_cast<T>(v);
      }
    }
    seen[name] = true;
  }
  for (const auto& p : params.all())
    if (!seen.count(p.name)) throw FormatError(path + ": missing parameter '" + p.name + "'");
  return h;
}

template void save_checkpoint<float>(const std::string&, const std::string&, const KeyValueConfig&,
                                     const nn::ParamStore<float>&);
template void save_checkpoint<double>(const std::string&, const std::string&, const KeyValueConfig&,
                                      const nn::ParamStore<double>&);
template CheckpointHeader load_checkpoint<float>(const std::string&, nn::ParamStore<float>&);
template CheckpointHeader load_checkpoint<double>(const std::string&, nn::ParamStore<double>&);

}  // namespace segtrack
