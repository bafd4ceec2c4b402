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

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskdiff/nn.hpp"
#include "maskdiff/predictor.hpp"

namespace maskdiff {

struct ModelConfig {
  int content_vocab = 16;
  bool tag_tokens = true;
  int d_model = 64;
  int heads = 2;
  int blocks = 2;
  int ffn_hidden = 128;
  int max_positions = 64;
  // Vision stub: one-hot cell id concatenated with one-hot cell position.
  int cell_ids = 16;
  int max_cells = 16;
  int projector_hidden = 64;
  double init_range = 0.02;
  double ln_eps = 1e-5;

  Vocabulary vocab() const { return Vocabulary(content_vocab, tag_tokens); }
  int vision_dim() const { return cell_ids + max_cells; }
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class ParamGroup { kVision, kLanguage, kProjector };
std::string_view to_string(ParamGroup group);
ParamGroup parse_param_group(std::string_view name);

struct Parameter {
  std::string name;
  ParamGroup group;
  Eigen::MatrixXd value;
};

/// One entry per parameter tensor of the store, same index and shape.
using Gradients = std::vector<Eigen::MatrixXd>;

/// Flat, ordered collection of named parameter tensors.
class ParameterStore {
 public:
  std::size_t add(std::string name, ParamGroup group, Eigen::MatrixXd value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t index_of(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Gradients zeros_like() const;
  /// FNV-1a over the raw bytes of every tensor in `group`, in store order.
  std::uint64_t checksum(ParamGroup group) const;
  std::uint64_t checksum() const;
  std::size_t scalar_count() const;

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<Parameter> params_;
};

/// Deterministic, parameterless featurizer for synthetic grids.
class VisionStub {
 public:
  VisionStub(int cell_ids, int max_cells) : cell_ids_(cell_ids), max_cells_(max_cells) {}
  int feature_dim() const { return cell_ids_ + max_cells_; }
  /// One feature row per cell in row-major order.
  Eigen::MatrixXd encode(const Grid& grid) const;

 private:
  int cell_ids_;
  int max_cells_;
};

struct BlockCache {
  Eigen::MatrixXd input;
  nn::LayerNormCache<double> ln1;
  Eigen::MatrixXd normed1, q, k, v;
  std::vector<Eigen::MatrixXd> attn;  // per head, T x T
  Eigen::MatrixXd mixed;              // concatenated head outputs
  Eigen::MatrixXd after_attn;
  nn::LayerNormCache<double> ln2;
  Eigen::MatrixXd normed2, hidden_pre, hidden;
};

struct ForwardCache {
  PredictorInput input;
  Eigen::MatrixXd image_features, proj_pre, proj_hidden, image_embed;
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd final_input;
  nn::LayerNormCache<double> final_ln;
  Eigen::MatrixXd final_normed;
};

struct ForwardResult {
  PredictionGrid probs;
  Eigen::MatrixXd logits;
  ForwardCache cache;
};

/// Bidirectional transformer mask predictor with a vision stub and a
/// two-layer projector feeding image features into the embedding space.
class TinyTransformer : public MaskPredictor {
 public:
  TinyTransformer(const ModelConfig& config, std::uint64_t seed);
  TinyTransformer(const ModelConfig& config, ParameterStore params);

  const ModelConfig& config() const { return config_; }
  Vocabulary vocab() const { return config_.vocab(); }
  int vocab_size() const override { return config_.content_vocab; }

  PredictionGrid predict(const PredictorInput& input) const override;
  ForwardResult forward(const PredictorInput& input) const;
  /// Gradient of sum(dlogits .* logits) w.r.t. every parameter.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& dlogits) const;

  Eigen::MatrixXd encode_image(const Grid& grid) const { return vision_.encode(grid); }
  Eigen::MatrixXd project(const Eigen::MatrixXd& features) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  struct BlockIndex {
    std::size_t ln1_gain, ln1_bias, wq, wk, wv, wo, bo;
    std::size_t ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  void build_index();
  const Eigen::MatrixXd& p(std::size_t i) const { return params_[i].value; }
  nn::RowVector<double> row(std::size_t i) const { return params_[i].value.row(0); }

  ModelConfig config_;
  VisionStub vision_;
  ParameterStore params_;
  std::size_t proj_w1_, proj_b1_, proj_w2_, proj_b2_;
  std::size_t tok_embed_, pos_embed_, role_embed_;
  std::vector<BlockIndex> block_idx_;
  std::size_t final_gain_, final_bias_, head_w_, head_b_;
};

/// Masked-token cross-entropy over one corrupted input. targets[i] < 0 marks
/// positions that contribute no loss; each contributing position adds
/// weight * -log p(target).
struct TrainingTerm {
  PredictorInput input;
  std::vector<Token> targets;
  double weight = 1.0;

  bool has_targets() const;
};

struct LossGradients {
  double loss = 0.0;
  Gradients grads;
  std::size_t loss_positions = 0;
};

/// Summed loss and its gradient over `terms`.
LossGradients loss_gradients(const TinyTransformer& model,
                             std::span<const TrainingTerm> terms);
double term_loss(const TinyTransformer& model, const TrainingTerm& term);

/// Adds `src` into `dst` tensor by tensor.
void accumulate(Gradients& dst, const Gradients& src, double scale = 1.0);

}  // namespace maskdiff
