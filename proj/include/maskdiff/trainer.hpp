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
#include <span>
#include <string_view>
#include <vector>

#include "maskdiff/conversation.hpp"
#include "maskdiff/predictor.hpp"
#include "maskdiff/transformer.hpp"

namespace maskdiff {

// ---------------------------------------------------------------------------
// Monte Carlo objective

struct McLossOptions {
  int n_draws = 1;
  /// t ~ Uniform(epsilon, 1).
  double epsilon = 1e-3;
  AttentionMaskKind attention = AttentionMaskKind::kNoMask;
};

struct LossReport {
  double objective = 0.0;       // mean over draws
  double standard_error = 0.0;  // of the mean
  std::vector<double> draws;    // per-draw (1/t) * summed masked NLL
  std::vector<std::size_t> masked_counts;
  std::vector<double> t_values;
};

/// One corruption draw of an example: t, the corrupted layout, and the
/// masked RESPONSE positions with their clean tokens.
struct CorruptionDraw {
  double t = 1.0;
  SequenceLayout corrupted;
  std::vector<std::size_t> masked;
  std::vector<Token> truth;
};

CorruptionDraw draw_corruption(const SequenceLayout& clean, const Vocabulary& vocab,
                               double epsilon, Rng& rng);

/// Unbiased (up to the epsilon floor) estimate of the masked-diffusion bound
/// for one example: average over draws of (1/t) * sum over masked response
/// positions of -log p(true token).
LossReport mc_loss(const ConversationExample& example, const MaskPredictor& predictor,
                   const Vocabulary& vocab, Rng& rng, const McLossOptions& options = {});

/// Transformer training term for one draw: targets on masked positions,
/// weight 1/t.
TrainingTerm make_training_term(const CorruptionDraw& draw, AttentionMaskKind attention);

// ---------------------------------------------------------------------------
// Optimizer

struct GroupRates {
  double vision = 0.0;
  double language = 0.0;
  double projector = 0.0;

  double of(ParamGroup group) const;
};

/// Classic momentum: v <- momentum * v + g; p <- p - rate(group) * v.
/// Tensors in `frozen` groups are left untouched (velocity included).
void sgd_step(ParameterStore& params, const Gradients& grads, const GroupRates& rates,
              double momentum, Gradients& velocity,
              std::span<const ParamGroup> frozen = {});

double global_norm(const Gradients& grads);

// ---------------------------------------------------------------------------
// Staged training

enum class Stage { kAlign, kInstruct, kReasoning, kBalanced };
Stage parse_stage(std::string_view name);
std::string_view to_string(Stage stage);

/// Groups a stage never updates.
std::vector<ParamGroup> frozen_groups(Stage stage);

struct TrainConfig {
  Stage stage = Stage::kInstruct;
  GroupRates rates{0.0, 0.05, 0.05};
  int batch_size = 16;
  int steps = 100;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  AttentionMaskKind attention = AttentionMaskKind::kNoMask;
  double momentum = 0.9;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  int log_every = 10;
  /// Worker threads for per-example gradients. Results do not depend on it.
  int shards = 1;

  void validate() const;
};

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  double t_mean = 0.0;
  double masked_frac = 0.0;
};

/// Checks the corpus is usable for the stage; throws ConfigError otherwise.
void check_stage_corpus(Stage stage, std::span<const ConversationExample> corpus);

std::vector<MetricsRow> train_stage(const TrainConfig& config, TinyTransformer& model,
                                    std::span<const ConversationExample> corpus);

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

}  // namespace maskdiff
