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

#include <doctest.h>

#include <cmath>

#include "maskdiff/harness.hpp"
#include "maskdiff/oracle.hpp"
#include "maskdiff/predictor.hpp"

using namespace maskdiff;
using doctest::Approx;

namespace {

// Direct summation over every sequence in [0, K)^N.
PredictionGrid brute_conditional(int k, int n, const std::vector<double>& dense,
                                 const std::vector<Token>& pattern) {
  PredictionGrid out = PredictionGrid::Zero(n, k);
  double evidence = 0.0;
  for (std::size_t code = 0; code < dense.size(); ++code) {
    std::vector<Token> seq(static_cast<std::size_t>(n));
    std::size_t rest = code;
    for (int i = n - 1; i >= 0; --i) {
      seq[static_cast<std::size_t>(i)] = static_cast<Token>(rest % static_cast<std::size_t>(k));
      rest /= static_cast<std::size_t>(k);
    }
    bool consistent = true;
    for (int i = 0; i < n; ++i) {
      const Token p = pattern[static_cast<std::size_t>(i)];
      if (p != k && p != seq[static_cast<std::size_t>(i)]) consistent = false;
    }
    if (!consistent) continue;
    evidence += dense[code];
    for (int i = 0; i < n; ++i) out(i, seq[static_cast<std::size_t>(i)]) += dense[code];
  }
  return out / evidence;
}

PredictorInput response_input(std::vector<Token> tokens) {
  ConversationExample ex;
  ex.turns.push_back({{0}, tokens});
  // tokens may hold MASK; lay out by hand to keep them.
  PredictorInput in;
  in.tokens.push_back(0);
  in.roles.push_back(Role::kPrompt);
  in.turns.push_back(0);
  for (Token t : tokens) {
    in.tokens.push_back(t);
    in.roles.push_back(Role::kResponse);
    in.turns.push_back(0);
  }
  const auto n = static_cast<Eigen::Index>(in.tokens.size());
  in.attention = AttentionMatrix::Constant(n, n, true);
  return in;
}

}  // namespace

TEST_SUITE("predictor") {

TEST_CASE("tabular conditional worked example") {
  // 00: 0.5, 01: 0.25, 10: 0.25, 11: 0
  const std::vector<double> probs{0.5, 0.25, 0.25, 0.0};
  const Joint joint = Joint::dense(2, 2, probs);
  const std::vector<Token> pattern{0, 2};
  const PredictionGrid g = tabular_conditional(joint, pattern);
  CHECK(g(1, 0) == Approx(2.0 / 3).epsilon(1e-14));
  CHECK(g(1, 1) == Approx(1.0 / 3).epsilon(1e-14));
  CHECK(g(0, 0) == 1.0);
  const std::vector<Token> impossible{1, 1};
  CHECK_THROWS_AS(tabular_conditional(joint, impossible), ImpossibleConditionError);
}

TEST_CASE("tabular conditional equals brute-force Bayes") {
  Rng rng(17);
  for (int k = 2; k <= 3; ++k) {
    for (int n = 1; n <= 3; ++n) {
      const Joint joint = random_joint(k, n, rng);
      std::vector<double> dense(joint.support_size());
      // random_joint fills the dense table in base-K order.
      for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = joint.probability(i);
      // Every pattern over {0..K-1, MASK}^N.
      std::size_t patterns = 1;
      for (int i = 0; i < n; ++i) patterns *= static_cast<std::size_t>(k + 1);
      for (std::size_t code = 0; code < patterns; ++code) {
        std::vector<Token> pattern(static_cast<std::size_t>(n));
        std::size_t rest = code;
        for (int i = 0; i < n; ++i) {
          pattern[static_cast<std::size_t>(i)] = static_cast<Token>(rest % static_cast<std::size_t>(k + 1));
          rest /= static_cast<std::size_t>(k + 1);
        }
        const PredictionGrid expected = brute_conditional(k, n, dense, pattern);
        const PredictionGrid got = tabular_conditional(joint, pattern);
        CHECK((expected - got).cwiseAbs().maxCoeff() < 1e-12);
        CHECK_NOTHROW(require_row_stochastic(got));
      }
    }
  }
}

TEST_CASE("degenerate and uniform joints") {
  const TabularPredictor point(Joint::point_mass(3, {2, 0, 1}));
  const PredictionGrid g = point.predict(response_input({3, 0, 3}));
  CHECK(g(1, 2) == 1.0);
  CHECK(g(3, 1) == 1.0);

  const TabularPredictor uni(Joint::uniform(3, 3));
  const PredictionGrid u = uni.predict(response_input({3, 3, 1}));
  for (Eigen::Index i : {1, 2}) {
    for (Eigen::Index v = 0; v < 3; ++v) CHECK(u(i, v) == Approx(1.0 / 3));
  }
}

TEST_CASE("tabular predictor validates the response count") {
  const TabularPredictor p(Joint::uniform(2, 2));
  CHECK_THROWS_AS(p.predict(response_input({2, 2, 2})), ValidationError);
}

TEST_CASE("joint validation") {
  const std::vector<double> bad{0.5, 0.6};
  CHECK_THROWS(Joint::dense(2, 1, bad));
  Joint j(2, 2);
  j.add({0, 1}, 0.4);
  CHECK_THROWS(j.validate());
  j.add({1, 1}, 0.6);
  CHECK_NOTHROW(j.validate());
  CHECK_THROWS(j.add({2, 0}, 0.1));
}

TEST_CASE("predictor input validation") {
  PredictorInput in = response_input({1});
  in.attention = AttentionMatrix::Constant(1, 1, true);
  CHECK_THROWS_AS(in.validate(), ValidationError);
}

TEST_CASE("context tabular truth predicts every eval example") {
  TaskSpec spec;
  spec.family = TaskFamily::kDialogue;
  const GridCaptionTask task(spec);
  const auto corpus = make_corpus(spec, 50, 3);
  const auto truth = ContextTabularPredictor::truth(corpus, task.content_vocab());
  for (const auto& ex : corpus) {
    CHECK(oracle::exact_bound(ex, truth, task.vocab()) == 0.0);
  }
  ConversationExample unseen = corpus[0];
  unseen.turns[0].prompt.push_back(task.q_color());
  CHECK_THROWS_AS(truth.predict(PredictorInput::from_layout(layout(unseen),
                                                              AttentionMaskKind::kNoMask)),
                  ValidationError);
}

}
