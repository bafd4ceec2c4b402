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

#include <algorithm>
#include <cmath>
#include <vector>

#include "maskdiff/task.hpp"
#include "maskdiff/trainer.hpp"
#include "maskdiff/transformer.hpp"

namespace maskdiff::testing {

struct FdResult {
  double max_rel_error = 0.0;
  int coordinates = 0;
};

inline double fd_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central differences on `count` random coordinates, every tensor visited.
inline FdResult finite_difference_check(TinyTransformer& model,
                                        const std::vector<TrainingTerm>& terms, int count,
                                        Rng& rng, double h = 1e-4) {
  const Gradients analytic = loss_gradients(model, terms).grads;
  auto total = [&]() {
    double s = 0.0;
    for (const auto& t : terms) s += term_loss(model, t);
    return s;
  };
  FdResult r;
  ParameterStore& params = model.params();
  for (int c = 0; c < count; ++c) {
    const std::size_t pi = static_cast<std::size_t>(c) % params.size();
    Eigen::MatrixXd& w = params[pi].value;
    const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(w.size())));
    const double keep = w.data()[idx];
    w.data()[idx] = keep + h;
    const double up = total();
    w.data()[idx] = keep - h;
    const double down = total();
    w.data()[idx] = keep;
    const double numeric = (up - down) / (2 * h);
    r.max_rel_error = std::max(r.max_rel_error, fd_rel_error(analytic[pi].data()[idx], numeric));
    ++r.coordinates;
  }
  return r;
}

/// A few corrupted two-turn dialogues with an image, as training terms.
inline std::vector<TrainingTerm> sample_terms(const TaskSpec& spec, int n, std::uint64_t seed,
                                              AttentionMaskKind attention) {
  TaskSpec s = spec;
  s.family = TaskFamily::kDialogue;
  const GridCaptionTask task(s);
  const auto corpus = make_corpus(s, static_cast<std::size_t>(n), seed);
  std::vector<TrainingTerm> terms;
  Rng rng = Rng::stream(seed, "terms");
  for (const auto& ex : corpus) {
    CorruptionDraw d;
    do {
      d = draw_corruption(layout(ex), task.vocab(), 0.3, rng);
    } while (d.masked.empty());
    terms.push_back(make_training_term(d, attention));
  }
  return terms;
}

}  // namespace maskdiff::testing
