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
#include <vector>

#include "maskdiff/conversation.hpp"
#include "maskdiff/predictor.hpp"
#include "maskdiff/sampler.hpp"

namespace maskdiff::oracle {

inline constexpr int kMaxForwardLength = 20;
inline constexpr int kMaxBoundLength = 12;
inline constexpr int kMaxReverseLength = 3;
inline constexpr int kMaxReverseVocab = 3;
inline constexpr int kMaxReverseSteps = 3;

/// Probability of every mask pattern over N positions; bit i of the index
/// set means position i is masked.
struct PatternDistribution {
  int length = 0;
  std::vector<double> probs;

  double total() const;
  double marginal(int position) const;
};

PatternDistribution enumerate_forward(int length, double t);

/// Integral over t in [0, 1] of t^(m-1) (1-t)^(n-m): (m-1)!(n-m)!/n!.
double beta_weight(int masked, int length);
/// Same integrand restricted to [eps, 1] and divided by (1 - eps): the
/// weight seen by an estimator drawing t ~ Uniform(eps, 1).
double truncated_beta_weight(int masked, int length, double eps);

/// Exact value of the masked-diffusion bound for one example by summing
/// every mask pattern over the response positions with its Beta weight.
double exact_bound(const ConversationExample& example, const MaskPredictor& predictor,
                   const Vocabulary& vocab,
                   AttentionMaskKind attention = AttentionMaskKind::kNoMask);

/// Expectation of the Monte Carlo estimator with floor `eps`.
double exact_truncated_bound(const ConversationExample& example,
                             const MaskPredictor& predictor, const Vocabulary& vocab,
                             double eps,
                             AttentionMaskKind attention = AttentionMaskKind::kNoMask);

/// Exact output distribution of the reverse sampler with the ceil keep-count
/// schedule, summing over every token choice and remask choice.
std::map<std::vector<Token>, double> enumerate_reverse(
    const MaskPredictor& predictor, const ConversationExample& history,
    const Vocabulary& vocab, int length, int steps,
    RemaskStrategy strategy = RemaskStrategy::kRandom, double temperature = 1.0,
    AttentionMaskKind attention = AttentionMaskKind::kNoMask);

}  // namespace maskdiff::oracle
