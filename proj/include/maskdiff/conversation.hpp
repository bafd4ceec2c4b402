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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "maskdiff/random.hpp"
#include "maskdiff/types.hpp"

namespace maskdiff {

/// Synthetic image: an H x W grid of integer cell ids, row-major.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<int> cells;

  Grid() = default;
  Grid(int h, int w, std::vector<int> c);

  int at(int row, int col) const { return cells[row * width + col]; }
  std::size_t size() const { return cells.size(); }
  bool operator==(const Grid&) const = default;
  auto operator<=>(const Grid&) const = default;
};

enum class Role : std::uint8_t { kImage = 0, kPrompt = 1, kResponse = 2 };
inline constexpr int kRoleCount = 3;

enum class Tag { kNone, kThink, kNoThink };
enum class CorpusClass { kDirect, kReasoning };

struct Turn {
  std::vector<Token> prompt;
  std::vector<Token> response;
  bool operator==(const Turn&) const = default;
};

struct ConversationExample {
  std::optional<Grid> image;
  std::vector<Turn> turns;
  Tag tag = Tag::kNone;
  CorpusClass cls = CorpusClass::kDirect;

  std::size_t response_tokens() const;
  bool operator==(const ConversationExample&) const = default;
};

struct LayoutEntry {
  Role role;
  int turn;
  // Token id for PROMPT/RESPONSE; grid cell index for IMAGE.
  Token token;
  bool operator==(const LayoutEntry&) const = default;
};

/// Flattened position map: IMAGE?, then PROMPT and RESPONSE per turn.
/// The image block shares turn index 0 with the first dialogue turn.
struct SequenceLayout {
  std::vector<LayoutEntry> entries;
  std::optional<Grid> image;
  Tag tag = Tag::kNone;
  CorpusClass cls = CorpusClass::kDirect;

  std::size_t size() const { return entries.size(); }
  std::vector<Token> tokens() const;
  std::vector<std::size_t> positions(Role role) const;
  std::vector<std::size_t> response_positions(int turn) const;
  int turn_count() const;
  bool operator==(const SequenceLayout&) const = default;
};

SequenceLayout layout(const ConversationExample& example);

/// Inverse of layout(): rebuilds the example the layout was made from.
ConversationExample reconstruct(const SequenceLayout& lay);

/// Masks every RESPONSE position independently with probability t, one t
/// shared across turns. IMAGE and PROMPT entries are never touched.
SequenceLayout corrupt_responses(const SequenceLayout& lay, double t,
                                 Rng& rng, const Vocabulary& vocab);

enum class AttentionMaskKind { kCausal, kDialogueCausal, kNoMask };

/// Dense query x key visibility matrix; (q, k) true iff q may attend k.
using AttentionMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

AttentionMatrix build_attention_mask(const SequenceLayout& lay,
                                     AttentionMaskKind kind);

AttentionMaskKind parse_attention_kind(std::string_view name);
std::string_view to_string(AttentionMaskKind kind);
CorpusClass parse_corpus_class(std::string_view name);
std::string_view to_string(CorpusClass cls);
std::string_view to_string(Tag tag);

struct TagPolicy {
  double think_fraction = 0.5;
};

/// DIRECT examples get NO_THINK appended to every prompt. Exactly
/// round(think_fraction * n) of the n REASONING examples, chosen uniformly
/// at random, get THINK; the rest stay untagged.
std::vector<ConversationExample> apply_tag_policy(
    std::vector<ConversationExample> examples, const Vocabulary& vocab,
    Rng& rng, const TagPolicy& policy = {});

}  // namespace maskdiff
