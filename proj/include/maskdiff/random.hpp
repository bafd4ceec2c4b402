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

#include <cstdint>
#include <random>
#include <string_view>

namespace maskdiff {

/// Seeded generator with named sub-streams. Every consumer of randomness
/// (corpus, init, masking, sampling) derives its own stream from the root
/// seed so that changing one factor leaves the others untouched.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream keyed by (root, name, a, b).
  static Rng stream(std::uint64_t root, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a over a byte string; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view bytes);

}  // namespace maskdiff
