// Copyright 2026 The maskdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "maskdiff/transformer.hpp"

namespace maskdiff {

// Checkpoint file layout:
//   line 1: compact JSON manifest terminated by '\n'
//     {"format": "maskdiff-checkpoint-v1",
//      "metadata": {...},
//      "tensors": [{"name", "group", "dtype": "float64",
//                   "shape": [rows, cols], "order": "row-major",
//                   "offset": <bytes from payload start>, "bytes"}, ...]}
//   rest:   raw little-endian IEEE-754 float64 payloads, concatenated.

inline constexpr const char* kCheckpointFormat = "maskdiff-checkpoint-v1";

struct Checkpoint {
  ParameterStore params;
  nlohmann::json metadata;
};

std::string serialize_checkpoint(const ParameterStore& params,
                                 const nlohmann::ordered_json& metadata);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const nlohmann::ordered_json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model checkpoints carry the ModelConfig under metadata["model"].
void save_model(const std::filesystem::path& path, const TinyTransformer& model,
                nlohmann::ordered_json extra = nlohmann::ordered_json::object());
TinyTransformer load_model(const std::filesystem::path& path);

}  // namespace maskdiff
