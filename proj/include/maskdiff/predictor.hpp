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

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "maskdiff/conversation.hpp"
#include "maskdiff/diffusion.hpp"

namespace maskdiff {

/// Everything a mask predictor conditions on: the (partially masked) token
/// layout, role and turn annotations, the image for IMAGE positions, and the
/// attention visibility matrix.
struct PredictorInput {
  std::vector<Token> tokens;
  std::vector<Role> roles;
  std::vector<int> turns;
  std::optional<Grid> image;
  AttentionMatrix attention;

  std::size_t size() const { return tokens.size(); }
  void validate() const;

  static PredictorInput from_layout(const SequenceLayout& lay,
                                    AttentionMaskKind kind);
  /// A bare sequence: every position RESPONSE in turn 0, full attention.
  static PredictorInput from_masked(const MaskedSequence& seq);
};

/// p_theta(x0^i | x_t): per-position distributions over the content
/// vocabulary. Rows are defined at every position; callers read MASK rows.
class MaskPredictor {
 public:
  virtual ~MaskPredictor() = default;
  virtual int vocab_size() const = 0;
  virtual PredictionGrid predict(const PredictorInput& input) const = 0;
};

/// Explicit joint over response sequences in [0, K)^N, stored by support.
class Joint {
 public:
  Joint(int vocab_size, int length) : k_(vocab_size), n_(length) {}

  /// Dense table in base-K order with position 0 most significant.
  static Joint dense(int vocab_size, int length, std::span<const double> probs);
  static Joint point_mass(int vocab_size, std::vector<Token> seq);
  static Joint uniform(int vocab_size, int length);

  void add(std::vector<Token> seq, double prob);
  /// Throws ValidationError unless the mass sums to 1 within `tol`.
  void validate(double tol = 1e-9) const;

  int vocab_size() const { return k_; }
  int length() const { return n_; }
  std::size_t support_size() const { return probs_.size(); }
  const std::vector<Token>& sequence(std::size_t i) const { return support_[i]; }
  double probability(std::size_t i) const { return probs_[i]; }

 private:
  int k_;
  int n_;
  std::vector<std::vector<Token>> support_;
  std::vector<double> probs_;
};

/// Exact Bayes conditional: for every masked entry (== K) of `pattern`, the
/// marginal P(x^i | observed entries) under `joint`, marginalizing the other
/// masked positions. Observed rows are one-hot.
PredictionGrid tabular_conditional(const Joint& joint,
                                   std::span<const Token> pattern);

/// Predictor backed by one joint over the RESPONSE positions of its input
/// (all turns, in layout order). Non-response rows are one-hot on content
/// tokens and uniform otherwise.
class TabularPredictor : public MaskPredictor {
 public:
  explicit TabularPredictor(Joint joint);
  int vocab_size() const override { return joint_.vocab_size(); }
  PredictionGrid predict(const PredictorInput& input) const override;
  const Joint& joint() const { return joint_; }

 private:
  Joint joint_;
};

/// A family of joints keyed by the clean context (image cells and prompt
/// tokens). With point-mass joints built from a corpus this is the
/// ground-truth predictor for that corpus.
class ContextTabularPredictor : public MaskPredictor {
 public:
  explicit ContextTabularPredictor(int vocab_size) : k_(vocab_size) {}

  void add(const ConversationExample& context, Joint joint);
  /// Point mass on each example's concatenated responses.
  static ContextTabularPredictor truth(std::span<const ConversationExample> corpus,
                                       int vocab_size);

  int vocab_size() const override { return k_; }
  PredictionGrid predict(const PredictorInput& input) const override;

 private:
  using Key = std::vector<int>;
  static Key context_key(const PredictorInput& input);
  static Key context_key(const ConversationExample& ex);

  int k_;
  std::map<Key, Joint> joints_;
};

/// Rows must be stochastic within `tol`.
void require_row_stochastic(const PredictionGrid& grid, double tol = 1e-6);

}  // namespace maskdiff
