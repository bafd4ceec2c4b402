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
#include <span>
#include <vector>

#include "maskdiff/random.hpp"
#include "maskdiff/types.hpp"

namespace maskdiff {

/// Per-position categorical distributions, one row per sequence position and
/// one column per content token.
using PredictionGrid = Eigen::MatrixXd;

enum class ScheduleKind { kLinear };

/// Noise schedule alpha(t): probability that a token survives to level t.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
};

double alpha(const NoiseSchedule& schedule, double t);

/// A clean token sequence over content vocabulary [0, K).
struct Sequence {
  std::vector<Token> tokens;
  int vocab_size = 2;

  Sequence() = default;
  Sequence(std::vector<Token> toks, int k);
  std::size_t size() const { return tokens.size(); }
};

/// Partially masked sequence. The MASK sentinel is the id `vocab_size`,
/// the first reserved id above the content range.
struct MaskedSequence {
  std::vector<Token> entries;
  int vocab_size = 2;
  double noise_level = 1.0;

  Token mask_id() const { return vocab_size; }
  bool is_mask(std::size_t i) const { return entries[i] == mask_id(); }
  std::size_t mask_count() const;
  std::size_t size() const { return entries.size(); }

  static MaskedSequence fully_masked(std::size_t length, int vocab_size);
};

/// Mask each position independently with probability 1 - alpha(t).
MaskedSequence forward_mask(const Sequence& x0, double t, Rng& rng,
                            const NoiseSchedule& schedule = {});

/// Law of one currently-masked position moving from level t to s < t.
struct ReverseTransition {
  double stay_mask = 0.0;
  Eigen::VectorXd resolve;  // mass on each content token

  double total() const { return stay_mask + resolve.sum(); }
};

ReverseTransition reverse_transition(double t, double s,
                                     const Eigen::Ref<const Eigen::VectorXd>&
                                         predicted,
                                     const NoiseSchedule& schedule = {});

/// One ancestral reverse step over a whole sequence. Unmasked positions are
/// carried over unchanged; masked positions draw from reverse_transition
/// using the matching row of `predicted`.
MaskedSequence reverse_step(const MaskedSequence& xt, double s,
                            const PredictionGrid& predicted, Rng& rng,
                            const NoiseSchedule& schedule = {});

/// Inverse-CDF draw over a fixed index ordering. `u` in [0, 1).
std::size_t sample_categorical(std::span<const double> probs, double u);

/// Throws ValidationError unless probs are non-negative and sum to 1 within
/// `tol`.
void require_normalized(const Eigen::Ref<const Eigen::VectorXd>& probs,
                        double tol);

}  // namespace maskdiff
