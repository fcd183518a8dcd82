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

// Single-file text checkpoints: a header, the embedded key=value config and
// every parameter tensor as hex floats (exact round trip).
//
//   segtrack-checkpoint 1 <kind>
//   config <n-lines>
//   <key=value lines>
//   param <name> <d0,d1,...> <count>
//   <values>
//   end

#include <string>

#include "segtrack/config.hpp"
#include "segtrack/nn.hpp"

namespace segtrack {

struct CheckpointHeader {
  std::string kind;
  KeyValueConfig config;
};

template <typename T>
void save_checkpoint(const std::string& path, const std::string& kind, const KeyValueConfig& config,
                     const nn::ParamStore<T>& params);

// Reads only the kind and config (to build a network of the right shape).
CheckpointHeader read_checkpoint_header(const std::string& path);

// Fills every parameter of params from the file; names and shapes must match
// exactly (FormatError otherwise).
template <typename T>
CheckpointHeader load_checkpoint(const std::string& path, nn::ParamStore<T>& params);

}  // namespace segtrack
