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

#pragma once

// COCO-compatible run-length encoding of binary masks.
//
// Pixels are visited in column-major order and runs alternate starting with
// background, so the first count is zero when pixel (0,0) is foreground. The
// string form packs each count (delta-coded against the count two positions
// back, from the fourth count on) into 5-bit groups carried by ASCII 48..111.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "segtrack/data_model.hpp"

namespace segtrack {

std::vector<std::uint32_t> rle_counts(const Mask& mask);
Mask rle_counts_decode(const std::vector<std::uint32_t>& counts, int height, int width);

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> rle_counts_from_string(std::string_view s);

// Requires a non-empty mask.
std::string encode_rle(const Mask& mask);
std::string encode_rle(const InstanceMask& mask);
// Throws FormatError if the counts do not cover height*width exactly.
Mask decode_rle(std::string_view s, int height, int width);

}  // namespace segtrack
