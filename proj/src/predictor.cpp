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

#include "maskdiff/predictor.hpp"

#include <cmath>
#include <string>

namespace maskdiff {

void PredictorInput::validate() const {
  const auto n = tokens.size();
  if (roles.size() != n || turns.size() != n) {
    throw ValidationError("predictor input annotations do not match length");
  }
  if (attention.rows() != static_cast<Eigen::Index>(n) ||
      attention.cols() != static_cast<Eigen::Index>(n)) {
    throw ValidationError("attention matrix dimension does not match length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (roles[i] == Role::kImage) {
      if (!image || tokens[i] < 0 ||
          static_cast<std::size_t>(tokens[i]) >= image->size()) {
        throw ValidationError("image position without a matching grid cell");
      }
    }
  }
}

PredictorInput PredictorInput::from_layout(const SequenceLayout& lay,
                                           AttentionMaskKind kind) {
  PredictorInput in;
  in.tokens.reserve(lay.size());
  for (const LayoutEntry& e : lay.entries) {
    in.tokens.push_back(e.token);
    in.roles.push_back(e.role);
    in.turns.push_back(e.turn);
  }
  in.image = lay.image;
  in.attention = build_attention_mask(lay, kind);
  return in;
}

PredictorInput PredictorInput::from_masked(const MaskedSequence& seq) {
  PredictorInput in;
  in.tokens = seq.entries;
  in.roles.assign(seq.size(), Role::kResponse);
  in.turns.assign(seq.size(), 0);
  const auto n = static_cast<Eigen::Index>(seq.size());
  in.attention = AttentionMatrix::Constant(n, n, true);
  return in;
}

Joint Joint::dense(int vocab_size, int length, std::span<const double> probs) {
  std::size_t expected = 1;
  for (int i = 0; i < length; ++i) expected *= static_cast<std::size_t>(vocab_size);
  if (probs.size() != expected) {
    throw ValidationError("dense joint needs K^N entries");
  }
  Joint joint(vocab_size, length);
  std::vector<Token> seq(static_cast<std::size_t>(length));
  for (std::size_t code = 0; code < probs.size(); ++code) {
    std::size_t rest = code;
    for (int i = length - 1; i >= 0; --i) {
      seq[static_cast<std::size_t>(i)] = static_cast<Token>(rest % vocab_size);
      rest /= static_cast<std::size_t>(vocab_size);
    }
    if (probs[code] < 0.0) throw ValidationError("negative joint probability");
    if (probs[code] > 0.0) joint.add(seq, probs[code]);
  }
  joint.validate();
  return joint;
}

Joint Joint::point_mass(int vocab_size, std::vector<Token> seq) {
  Joint joint(vocab_size, static_cast<int>(seq.size()));
  joint.add(std::move(seq), 1.0);
  return joint;
}

Joint Joint::uniform(int vocab_size, int length) {
  std::size_t count = 1;
  for (int i = 0; i < length; ++i) count *= static_cast<std::size_t>(vocab_size);
  const std::vector<double> probs(count, 1.0 / static_cast<double>(count));
  return dense(vocab_size, length, probs);
}

void Joint::add(std::vector<Token> seq, double prob) {
  if (static_cast<int>(seq.size()) != n_) {
    throw ValidationError("joint support sequence has wrong length");
  }
  for (Token t : seq) {
    if (t < 0 || t >= k_) throw ValidationError("joint token outside [0, K)");
  }
  if (!(prob >= 0.0) || !std::isfinite(prob)) {
    throw ValidationError("joint probability must be finite and >= 0");
  }
  support_.push_back(std::move(seq));
  probs_.push_back(prob);
}

void Joint::validate(double tol) const {
  double total = 0.0;
  for (double p : probs_) total += p;
  if (std::abs(total - 1.0) > tol) throw ValidationError("joint does not sum to 1");
}

PredictionGrid tabular_conditional(const Joint& joint,
                                   std::span<const Token> pattern) {
  const int k = joint.vocab_size();
  const int n = joint.length();
  if (static_cast<int>(pattern.size()) != n) {
    throw ValidationError("mask pattern length does not match joint");
  }
  for (Token t : pattern) {
    if (t < 0 || t > k) throw ValidationError("pattern entry outside [0, K]");
  }
  PredictionGrid acc = PredictionGrid::Zero(n, k);
  double evidence = 0.0;
  for (std::size_t s = 0; s < joint.support_size(); ++s) {
    const auto& seq = joint.sequence(s);
    bool consistent = true;
    for (int i = 0; i < n && consistent; ++i) {
      consistent = pattern[i] == k || pattern[i] == seq[i];
    }
    if (!consistent) continue;
    const double p = joint.probability(s);
    evidence += p;
    for (int i = 0; i < n; ++i) {
      if (pattern[i] == k) acc(i, seq[i]) += p;
    }
  }
  if (!(evidence > 0.0)) {
    throw ImpossibleConditionError("observed tokens have zero probability");
  }
  PredictionGrid out(n, k);
  for (int i = 0; i < n; ++i) {
    if (pattern[i] == k) {
      out.row(i) = acc.row(i) / evidence;
    } else {
      out.row(i).setZero();
      out(i, pattern[i]) = 1.0;
    }
  }
  return out;
}

namespace {

void fill_context_rows(const PredictorInput& input, int k, PredictionGrid& grid) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input.roles[i] == Role::kResponse) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const Token t = input.tokens[i];
    if (input.roles[i] != Role::kImage && t >= 0 && t < k) {
      grid.row(r).setZero();
      grid(r, t) = 1.0;
    } else {
      grid.row(r).setConstant(1.0 / k);
    }
  }
}

PredictionGrid predict_from_joint(const Joint& joint, const PredictorInput& input) {
  std::vector<std::size_t> response;
  std::vector<Token> pattern;
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input.roles[i] == Role::kResponse) {
      response.push_back(i);
      pattern.push_back(input.tokens[i]);
    }
  }
  if (static_cast<int>(response.size()) != joint.length()) {
    throw ValidationError("input has " + std::to_string(response.size()) +
                          " response positions, joint expects " +
                          std::to_string(joint.length()));
  }
  const int k = joint.vocab_size();
  PredictionGrid grid(static_cast<Eigen::Index>(input.size()), k);
  fill_context_rows(input, k, grid);
  const PredictionGrid cond = tabular_conditional(joint, pattern);
  for (std::size_t j = 0; j < response.size(); ++j) {
    grid.row(static_cast<Eigen::Index>(response[j])) =
        cond.row(static_cast<Eigen::Index>(j));
  }
  return grid;
}

}  // namespace

TabularPredictor::TabularPredictor(Joint joint) : joint_(std::move(joint)) {
  joint_.validate();
}

PredictionGrid TabularPredictor::predict(const PredictorInput& input) const {
  input.validate();
  return predict_from_joint(joint_, input);
}

ContextTabularPredictor::Key ContextTabularPredictor::context_key(
    const PredictorInput& input) {
  Key key;
  if (input.image) {
    key.push_back(input.image->height);
    key.push_back(input.image->width);
    key.insert(key.end(), input.image->cells.begin(), input.image->cells.end());
  }
  key.push_back(-1);
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input.roles[i] != Role::kPrompt) continue;
    key.push_back(input.turns[i]);
    key.push_back(input.tokens[i]);
  }
  return key;
}

ContextTabularPredictor::Key ContextTabularPredictor::context_key(
    const ConversationExample& ex) {
  const SequenceLayout lay = layout(ex);
  return context_key(PredictorInput::from_layout(lay, AttentionMaskKind::kNoMask));
}

void ContextTabularPredictor::add(const ConversationExample& context, Joint joint) {
  if (joint.vocab_size() != k_) throw ValidationError("joint vocab mismatch");
  joint.validate();
  joints_.insert_or_assign(context_key(context), std::move(joint));
}

ContextTabularPredictor ContextTabularPredictor::truth(
    std::span<const ConversationExample> corpus, int vocab_size) {
  ContextTabularPredictor out(vocab_size);
  for (const ConversationExample& ex : corpus) {
    std::vector<Token> all;
    for (const Turn& t : ex.turns) all.insert(all.end(), t.response.begin(), t.response.end());
    out.add(ex, Joint::point_mass(vocab_size, std::move(all)));
  }
  return out;
}

PredictionGrid ContextTabularPredictor::predict(const PredictorInput& input) const {
  input.validate();
  const auto it = joints_.find(context_key(input));
  if (it == joints_.end()) {
    throw ValidationError("context not covered by the tabular predictor");
  }
  return predict_from_joint(it->second, input);
}

void require_row_stochastic(const PredictionGrid& grid, double tol) {
  if (!grid.allFinite() || (grid.array() < 0.0).any()) {
    throw NumericError("prediction grid has negative or non-finite entries");
  }
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    if (std::abs(grid.row(r).sum() - 1.0) > tol) {
      throw NumericError("prediction row " + std::to_string(r) +
                         " is not normalized");
    }
  }
}

}  // namespace maskdiff
