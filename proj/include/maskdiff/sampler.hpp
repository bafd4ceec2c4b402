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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "maskdiff/conversation.hpp"
#include "maskdiff/predictor.hpp"

namespace maskdiff {

enum class RemaskStrategy { kRandom, kLowConfidence };
RemaskStrategy parse_remask(std::string_view name);
std::string_view to_string(RemaskStrategy strategy);

struct SamplerConfig {
  int gen_length = 8;
  /// Clamped to gen_length.
  int steps = 8;
  RemaskStrategy strategy = RemaskStrategy::kLowConfidence;
  AttentionMaskKind attention = AttentionMaskKind::kNoMask;
  /// 0 selects the argmax token.
  double temperature = 0.0;
  std::uint64_t seed = 0;
  /// Semi-autoregressive block decoding; 0 disables.
  int block_size = 0;
};

struct TraceStep {
  int step = 0;
  double t = 1.0;
  double s = 0.0;
  std::vector<int> finalized;  // response-relative positions
  std::vector<double> confidences;
};

struct DenoiseTrace {
  std::vector<TraceStep> steps;
};

struct Generation {
  std::vector<Token> response;  // trailing PAD/EOS stripped
  std::vector<Token> raw;       // all gen_length tokens
  DenoiseTrace trace;
};

/// Positions finalized at step k (1-based) of an S-step schedule over L.
int unmask_count(int k, int length, int steps);

/// Chooses which n_keep of the candidate positions keep their prediction.
/// LOW_CONFIDENCE keeps the highest confidences, ties to the lower position.
/// Returned in ascending position order.
std::vector<int> remask_select(std::span<const int> positions,
                               std::span<const double> confidences, int n_keep,
                               RemaskStrategy strategy, Rng& rng);

/// Generates the response to the trailing prompt of `history` (its last
/// turn must have an empty response). Randomness comes from the stream
/// (cfg.seed, "sample", turn index).
Generation generate(const MaskPredictor& predictor, const ConversationExample& history,
                    const Vocabulary& vocab, const SamplerConfig& cfg);

/// Turn-by-turn chat: each prompt is answered with all earlier turns as
/// clean context.
std::vector<std::vector<Token>> multi_turn_chat(const MaskPredictor& predictor,
                                                const std::optional<Grid>& image,
                                                std::span<const std::vector<Token>> prompts,
                                                const Vocabulary& vocab,
                                                const SamplerConfig& cfg,
                                                std::vector<DenoiseTrace>* traces = nullptr);

void write_trace_csv(const std::filesystem::path& path, const DenoiseTrace& trace);
void write_trace_csv(std::ostream& out, const DenoiseTrace& trace);

}  // namespace maskdiff
