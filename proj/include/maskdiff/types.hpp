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
#include <stdexcept>
#include <string>

namespace maskdiff {

using Token = std::int32_t;

// Error taxonomy. Each maps to one failure class named in the module
// contracts; callers catch the std base when they do not care which.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Conditioning on an observation the joint assigns zero probability.
struct ImpossibleConditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// An oracle was asked for an instance beyond its enumeration guard.
struct RefusalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Token id space. Content tokens occupy [0, K); reserved ids sit directly
/// above them in the order MASK, PAD, EOS, THINK, NO_THINK. Predictions are
/// only ever made over the content range.
class Vocabulary {
 public:
  static constexpr int kReservedWithTags = 5;
  static constexpr int kReservedWithoutTags = 3;

  explicit Vocabulary(int content_size, bool tag_tokens = true)
      : content_size_(content_size), tag_tokens_(tag_tokens) {
    if (content_size < 2) {
      throw ValidationError("vocabulary needs at least 2 content tokens");
    }
  }

  int content_size() const { return content_size_; }
  bool has_tag_tokens() const { return tag_tokens_; }
  int total_size() const {
    return content_size_ +
           (tag_tokens_ ? kReservedWithTags : kReservedWithoutTags);
  }

  Token mask() const { return content_size_; }
  Token pad() const { return content_size_ + 1; }
  Token eos() const { return content_size_ + 2; }
  Token think() const {
    require_tags();
    return content_size_ + 3;
  }
  Token no_think() const {
    require_tags();
    return content_size_ + 4;
  }

  bool is_content(Token t) const { return t >= 0 && t < content_size_; }
  bool is_valid(Token t) const { return t >= 0 && t < total_size(); }

  bool operator==(const Vocabulary&) const = default;

 private:
  void require_tags() const {
    if (!tag_tokens_) {
      throw ConfigError("vocabulary has no reserved THINK/NO_THINK tokens");
    }
  }

  int content_size_;
  bool tag_tokens_;
};

}  // namespace maskdiff
