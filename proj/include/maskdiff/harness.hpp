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
#include <string>
#include <vector>

#include "json.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/task.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

// ---------------------------------------------------------------------------
// Evaluation

struct EvalConfig {
  /// gen_length is replaced by each example's true final-response length.
  SamplerConfig sampler;
  /// mc_loss draws per example for mean_bound; 0 skips the loss.
  int loss_draws = 1;
  double epsilon = 1e-3;
  /// Examples are independent; results do not depend on this.
  int threads = 1;
};

struct EvalReport {
  double exact_match = 0.0;
  double token_accuracy = 0.0;
  double mean_bound = 0.0;
  std::size_t examples = 0;
  std::size_t tokens = 0;

  nlohmann::ordered_json to_json() const;
  bool operator==(const EvalReport&) const = default;
};

/// Generates the final response of every example (earlier turns given as
/// clean context) and scores it against the reference.
EvalReport evaluate(const MaskPredictor& predictor, const Vocabulary& vocab,
                    std::span<const ConversationExample> corpus, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Staged training plan

struct StagePlan {
  TrainConfig train;
  /// Run apply_tag_policy on the corpus before this stage.
  bool apply_tags = false;
  std::optional<std::filesystem::path> corpus;
};

/// Runs every stage in order on one model.
std::vector<MetricsRow> train_plan(TinyTransformer& model, std::span<const StagePlan> plan,
                                   const std::vector<ConversationExample>& corpus,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ablation

struct AblationSpec {
  ModelConfig model;
  std::vector<StagePlan> stages;
  std::vector<AttentionMaskKind> attention_kinds{AttentionMaskKind::kNoMask};
  std::vector<RemaskStrategy> strategies{RemaskStrategy::kLowConfidence};
  std::vector<ConversationExample> train;
  std::vector<ConversationExample> eval;
  /// Optional single-turn control corpora evaluated with the same cells.
  std::vector<ConversationExample> control_train;
  std::vector<ConversationExample> control_eval;
  EvalConfig eval_config;
  std::uint64_t seed = 0;
};

struct AblationCell {
  std::string corpus;  // "main" or "control"
  AttentionMaskKind attention;
  RemaskStrategy strategy;
  EvalReport report;
  std::uint64_t checksum = 0;  // trained parameters
};

std::vector<AblationCell> run_ablation(const AblationSpec& spec);

/// Side-by-side table, metrics as rows and cells as columns (markdown).
std::string format_ablation_table(std::span<const AblationCell> cells);
nlohmann::ordered_json ablation_json(std::span<const AblationCell> cells);

// ---------------------------------------------------------------------------
// Oracle checks

struct OracleCheckRow {
  std::string suite;
  std::string name;
  double statistic = 0.0;  // chi-square p-value, |z|, or total variation
  double max_deviation = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// forward_mask frequencies against enumerate_forward (chi-square p-value).
std::vector<OracleCheckRow> check_forward(std::uint64_t seed, int length,
                                          std::span<const double> ts, int draws,
                                          double p_threshold = 1e-3);
/// mc_loss against exact_bound on random tabular predictors.
std::vector<OracleCheckRow> check_bound(std::uint64_t seed, int predictors, int max_length,
                                        int draws, double epsilon, double z = 2.5758293035489);
/// generate() against enumerate_reverse, by total variation.
std::vector<OracleCheckRow> check_reverse(std::uint64_t seed, int runs, int length, int k,
                                          int steps, double tv_threshold = 0.01);

void write_oracle_csv(std::ostream& out, std::span<const OracleCheckRow> rows);

/// Random Dirichlet(1) joint over [0, K)^N.
Joint random_joint(int vocab_size, int length, Rng& rng);

// ---------------------------------------------------------------------------
// Full pipeline: data, staged training, checkpoint, evaluation.

struct PipelineConfig {
  std::uint64_t seed = 0;
  TaskSpec task;
  std::size_t train_size = 5000;
  std::size_t eval_size = 500;
  ModelConfig model;
  std::vector<StagePlan> stages;
  EvalConfig eval;
};

struct PipelineResult {
  TinyTransformer model;
  EvalReport report;
  std::vector<MetricsRow> metrics;
};

/// Writes train.jsonl, eval.jsonl, model.ckpt, metrics.csv and eval.json
/// under out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// Model config with vocabulary and vision sizes taken from the task.
ModelConfig model_for_task(ModelConfig model, const TaskSpec& task);

}  // namespace maskdiff
