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
#include <vector>

#include "json.hpp"
#include "maskdiff/harness.hpp"

namespace maskdiff {

struct AblationSettings {
  std::vector<AttentionMaskKind> attention{AttentionMaskKind::kNoMask,
                                           AttentionMaskKind::kDialogueCausal};
  std::vector<RemaskStrategy> remask{RemaskStrategy::kLowConfidence};
  /// Task family for the main corpus; the control is always single-turn captions.
  TaskFamily family = TaskFamily::kDialogue;
  bool control = true;
};

/// Everything the command-line tool reads from --config. Missing keys keep
/// their defaults; unknown keys are rejected.
struct AppConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  PipelineConfig pipeline;
  SamplerConfig sample;
  AblationSettings ablation;
};

AppConfig default_config();
AppConfig parse_config(const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const AppConfig& cfg);

}  // namespace maskdiff
