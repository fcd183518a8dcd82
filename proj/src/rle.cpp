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

#include "segtrack/rle.hpp"

#include "segtrack/errors.hpp"

namespace segtrack {

std::vector<std::uint32_t> rle_counts(const Mask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint32_t run = 0;
  bool current = false;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const bool v = mask.at(y, x);
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

Mask rle_counts_decode(const std::vector<std::uint32_t>& counts, int height, int width) {
  Mask mask(height, width);
  const std::uint64_t total = static_cast<std::uint64_t>(height) * width;
  std::uint64_t pos = 0;
  bool value = false;
  for (std::uint32_t c : counts) {
    if (pos + c > total) throw FormatError("RLE counts exceed mask size");
    for (std::uint32_t k = 0; k < c; ++k, ++pos) {
      if (value) {
        const int x = static_cast<int>(pos / height);
        const int y = static_cast<int>(pos % height);
        mask.set(y, x);
      }
    }
    value = !value;
  }
  if (pos != total) throw FormatError("RLE counts do not cover the mask");
  return mask;
}

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) x -= static_cast<long long>(counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

std::vector<std::uint32_t> rle_counts_from_string(std::string_view s) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw FormatError("truncated RLE string");
      const int c = static_cast<int>(s[p]) - 48;
      if (c < 0 || c > 63) throw FormatError("invalid character in RLE string");
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += static_cast<long long>(counts[counts.size() - 2]);
    if (x < 0) throw FormatError("negative run in RLE string");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

std::string encode_rle(const Mask& mask) {
  if (!mask.any()) throw ContractViolation("encode_rle: mask has no foreground pixels");
  return rle_counts_to_string(rle_counts(mask));
}

std::string encode_rle(const InstanceMask& mask) { return encode_rle(mask.mask); }

Mask decode_rle(std::string_view s, int height, int width) {
  return rle_counts_decode(rle_counts_from_string(s), height, width);
}

}  // namespace segtrack
