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

#include "maskdiff/diffusion.hpp"
#include "maskdiff/oracle.hpp"

using namespace maskdiff;
using doctest::Approx;

TEST_SUITE("diffusion") {

TEST_CASE("linear schedule") {
  const NoiseSchedule lin;
  CHECK(alpha(lin, 0.0) == 1.0);
  CHECK(alpha(lin, 1.0) == 0.0);
  CHECK(alpha(lin, 0.25) == 0.75);
  CHECK_THROWS_AS(alpha(lin, -0.01), DomainError);
  CHECK_THROWS_AS(alpha(lin, 1.01), DomainError);
  CHECK_THROWS_AS(alpha(lin, std::nan("")), DomainError);
  double prev = 2.0;
  for (int i = 0; i <= 100; ++i) {
    const double a = alpha(lin, i / 100.0);
    CHECK(a < prev);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    prev = a;
  }
}

TEST_CASE("sequence validates tokens") {
  CHECK_NOTHROW(Sequence({0, 1, 2}, 3));
  CHECK_THROWS_AS(Sequence({0, 3}, 3), ValidationError);
  CHECK_THROWS_AS(Sequence({-1}, 3), ValidationError);
  CHECK_THROWS(Sequence({0}, 1));
}

TEST_CASE("forward_mask endpoints") {
  const Sequence x0({3, 1, 4, 1, 5}, 6);
  Rng rng(1);
  const MaskedSequence clean = forward_mask(x0, 0.0, rng);
  CHECK(clean.entries == x0.tokens);
  CHECK(clean.mask_count() == 0);
  CHECK(clean.noise_level == 0.0);
  const MaskedSequence full = forward_mask(x0, 1.0, rng);
  CHECK(full.mask_count() == x0.size());
  CHECK(full.mask_id() == 6);
  CHECK_THROWS_AS(forward_mask(x0, 1.5, rng), DomainError);
}

TEST_CASE("forward_mask keeps unmasked tokens and per-position rate t") {
  const Sequence x0({0, 1, 2, 3, 0, 1, 2, 3}, 4);
  Rng rng(2);
  const double t = 0.3;
  const int draws = 20000;
  std::vector<int> hits(x0.size(), 0);
  for (int d = 0; d < draws; ++d) {
    const MaskedSequence m = forward_mask(x0, t, rng);
    REQUIRE(m.size() == x0.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.is_mask(i)) {
        ++hits[i];
      } else {
        REQUIRE(m.entries[i] == x0.tokens[i]);
      }
    }
  }
  // 5 binomial standard deviations.
  const double sd = std::sqrt(t * (1 - t) / draws);
  for (int h : hits) CHECK(std::abs(h / double(draws) - t) < 5 * sd);
}

TEST_CASE("expected mask count grows with t") {
  const Sequence x0(std::vector<Token>(10, 0), 2);
  double prev = -1.0;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    Rng rng(3);
    double total = 0.0;
    for (int d = 0; d < 4000; ++d) total += forward_mask(x0, t, rng).mask_count();
    CHECK(total / 4000 > prev);
    prev = total / 4000;
  }
}

TEST_CASE("reverse_transition values") {
  Eigen::VectorXd p(2);
  p << 0.9, 0.1;
  const ReverseTransition a = reverse_transition(0.6, 0.3, p);
  CHECK(a.stay_mask == Approx(0.5).epsilon(1e-15));
  CHECK(a.resolve[0] == Approx(0.45).epsilon(1e-15));
  CHECK(a.resolve[1] == Approx(0.05).epsilon(1e-15));
  CHECK(std::abs(a.total() - 1.0) < 1e-12);

  const ReverseTransition b = reverse_transition(0.8, 0.0, p);
  CHECK(b.stay_mask == 0.0);
  CHECK(b.resolve[0] == Approx(0.9));
  CHECK(reverse_transition(0.8, 0.4, p).stay_mask == Approx(0.5));
}

TEST_CASE("reverse_transition rejects bad inputs") {
  Eigen::VectorXd p(2);
  p << 0.5, 0.5;
  CHECK_THROWS_AS(reverse_transition(0.4, 0.4, p), ArgumentError);
  CHECK_THROWS_AS(reverse_transition(0.4, 0.6, p), ArgumentError);
  Eigen::VectorXd bad(2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(reverse_transition(0.6, 0.3, bad), ValidationError);
  bad << 1.2, -0.2;
  CHECK_THROWS_AS(reverse_transition(0.6, 0.3, bad), ValidationError);
}

TEST_CASE("reverse_step carries over and fills") {
  MaskedSequence xt = MaskedSequence::fully_masked(4, 3);
  xt.entries[1] = 2;
  xt.noise_level = 0.5;
  PredictionGrid grid = PredictionGrid::Constant(4, 3, 1.0 / 3);
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const MaskedSequence xs = reverse_step(xt, 0.25, grid, rng);
    CHECK(xs.entries[1] == 2);
    CHECK(xs.noise_level == 0.25);
  }
  const MaskedSequence done = reverse_step(xt, 0.0, grid, rng);
  CHECK(done.mask_count() == 0);
}

TEST_CASE("sample_categorical is inverse cdf") {
  const std::vector<double> p{0.2, 0.5, 0.3};
  CHECK(sample_categorical(p, 0.0) == 0);
  CHECK(sample_categorical(p, 0.1999) == 0);
  CHECK(sample_categorical(p, 0.2) == 1);
  CHECK(sample_categorical(p, 0.6999) == 1);
  CHECK(sample_categorical(p, 0.7) == 2);
  CHECK(sample_categorical(p, 0.9999999) == 2);
}

}
