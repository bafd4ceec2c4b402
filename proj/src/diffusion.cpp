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

#include "maskdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace maskdiff {

namespace {

void require_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

double alpha(const NoiseSchedule& schedule, double t) {
  require_unit_interval(t, "noise level t");
  switch (schedule.kind) {
    case ScheduleKind::kLinear:
      return 1.0 - t;
  }
  throw DomainError("unknown noise schedule");
}

Sequence::Sequence(std::vector<Token> toks, int k)
    : tokens(std::move(toks)), vocab_size(k) {
  if (k < 2) throw ValidationError("vocab size must be >= 2");
  for (Token tok : tokens) {
    if (tok < 0 || tok >= k) throw ValidationError("token outside [0, K)");
  }
}

std::size_t MaskedSequence::mask_count() const {
  return static_cast<std::size_t>(
      std::count(entries.begin(), entries.end(), mask_id()));
}

MaskedSequence MaskedSequence::fully_masked(std::size_t length,
                                            int vocab_size) {
  MaskedSequence out;
  out.vocab_size = vocab_size;
  out.entries.assign(length, vocab_size);
  out.noise_level = 1.0;
  return out;
}

MaskedSequence forward_mask(const Sequence& x0, double t, Rng& rng,
                            const NoiseSchedule& schedule) {
  const double mask_prob = 1.0 - alpha(schedule, t);
  MaskedSequence out;
  out.vocab_size = x0.vocab_size;
  out.noise_level = t;
  out.entries.reserve(x0.size());
  for (Token tok : x0.tokens) {
    // One uniform per position regardless of t keeps streams aligned.
    const double u = rng.uniform();
    out.entries.push_back(u < mask_prob ? out.mask_id() : tok);
  }
  return out;
}

void require_normalized(const Eigen::Ref<const Eigen::VectorXd>& probs,
                        double tol) {
  if ((probs.array() < 0.0).any() || !probs.allFinite()) {
    throw ValidationError("distribution has negative or non-finite mass");
  }
  if (std::abs(probs.sum() - 1.0) > tol) {
    throw ValidationError("distribution does not sum to 1");
  }
}

ReverseTransition reverse_transition(
    double t, double s, const Eigen::Ref<const Eigen::VectorXd>& predicted,
    const NoiseSchedule& schedule) {
  require_unit_interval(t, "t");
  require_unit_interval(s, "s");
  if (!(s < t)) throw ArgumentError("reverse transition needs s < t");
  require_normalized(predicted, 1e-9);

  const double alpha_t = alpha(schedule, t);
  const double alpha_s = alpha(schedule, s);
  const double denom = 1.0 - alpha_t;
  ReverseTransition out;
  out.stay_mask = (1.0 - alpha_s) / denom;
  out.resolve = ((alpha_s - alpha_t) / denom) * predicted;
  return out;
}

MaskedSequence reverse_step(const MaskedSequence& xt, double s,
                            const PredictionGrid& predicted, Rng& rng,
                            const NoiseSchedule& schedule) {
  if (static_cast<std::size_t>(predicted.rows()) != xt.size() ||
      predicted.cols() != xt.vocab_size) {
    throw ValidationError("prediction grid shape does not match sequence");
  }
  MaskedSequence out = xt;
  out.noise_level = s;
  std::vector<double> mass(static_cast<std::size_t>(xt.vocab_size) + 1);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_mask(i)) continue;
    const ReverseTransition step = reverse_transition(
        xt.noise_level, s, predicted.row(static_cast<Eigen::Index>(i)).transpose(),
        schedule);
    for (int v = 0; v < xt.vocab_size; ++v) mass[v] = step.resolve[v];
    mass.back() = step.stay_mask;
    const std::size_t pick = sample_categorical(mass, rng.uniform());
    out.entries[i] = pick == mass.size() - 1 ? out.mask_id()
                                             : static_cast<Token>(pick);
  }
  return out;
}

std::size_t sample_categorical(std::span<const double> probs, double u) {
  if (probs.empty()) throw ArgumentError("empty categorical");
  double total = 0.0;
  for (double p : probs) total += p;
  const double target = u * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += probs[i];
    if (target < cumulative) return i;
  }
  return last_positive;
}

}  // namespace maskdiff
