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

#include "maskdiff/conversation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace maskdiff {

Grid::Grid(int h, int w, std::vector<int> c)
    : height(h), width(w), cells(std::move(c)) {
  if (h <= 0 || w <= 0) throw ValidationError("grid dims must be positive");
  if (cells.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw ValidationError("grid cell count does not match dims");
  }
}

std::size_t ConversationExample::response_tokens() const {
  std::size_t n = 0;
  for (const Turn& turn : turns) n += turn.response.size();
  return n;
}

std::vector<Token> SequenceLayout::tokens() const {
  std::vector<Token> out;
  out.reserve(entries.size());
  for (const LayoutEntry& e : entries) out.push_back(e.token);
  return out;
}

std::vector<std::size_t> SequenceLayout::positions(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].role == role) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SequenceLayout::response_positions(int turn) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].role == Role::kResponse && entries[i].turn == turn) {
      out.push_back(i);
    }
  }
  return out;
}

int SequenceLayout::turn_count() const {
  int count = 0;
  for (const LayoutEntry& e : entries) {
    if (e.role != Role::kImage) count = std::max(count, e.turn + 1);
  }
  return count;
}

SequenceLayout layout(const ConversationExample& example) {
  if (example.turns.empty()) {
    throw ValidationError("conversation example has no turns");
  }
  SequenceLayout out;
  out.image = example.image;
  out.tag = example.tag;
  out.cls = example.cls;
  if (example.image) {
    for (std::size_t i = 0; i < example.image->size(); ++i) {
      out.entries.push_back({Role::kImage, 0, static_cast<Token>(i)});
    }
  }
  for (std::size_t k = 0; k < example.turns.size(); ++k) {
    const Turn& turn = example.turns[k];
    if (turn.prompt.empty()) {
      throw ValidationError("turn " + std::to_string(k) + " has empty prompt");
    }
    const int idx = static_cast<int>(k);
    for (Token tok : turn.prompt) out.entries.push_back({Role::kPrompt, idx, tok});
    for (Token tok : turn.response) {
      out.entries.push_back({Role::kResponse, idx, tok});
    }
  }
  return out;
}

ConversationExample reconstruct(const SequenceLayout& lay) {
  ConversationExample out;
  out.image = lay.image;
  out.tag = lay.tag;
  out.cls = lay.cls;
  for (const LayoutEntry& e : lay.entries) {
    if (e.role == Role::kImage) continue;
    if (static_cast<int>(out.turns.size()) <= e.turn) {
      out.turns.resize(static_cast<std::size_t>(e.turn) + 1);
    }
    Turn& turn = out.turns[static_cast<std::size_t>(e.turn)];
    (e.role == Role::kPrompt ? turn.prompt : turn.response).push_back(e.token);
  }
  return out;
}

SequenceLayout corrupt_responses(const SequenceLayout& lay, double t,
                                 Rng& rng, const Vocabulary& vocab) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
  SequenceLayout out = lay;
  for (LayoutEntry& e : out.entries) {
    if (e.role != Role::kResponse) continue;
    if (rng.uniform() < t) e.token = vocab.mask();
  }
  return out;
}

AttentionMatrix build_attention_mask(const SequenceLayout& lay,
                                     AttentionMaskKind kind) {
  const auto n = static_cast<Eigen::Index>(lay.size());
  AttentionMatrix mask(n, n);
  switch (kind) {
    case AttentionMaskKind::kNoMask:
      mask.setConstant(true);
      break;
    case AttentionMaskKind::kCausal:
      for (Eigen::Index q = 0; q < n; ++q) {
        for (Eigen::Index k = 0; k < n; ++k) mask(q, k) = k <= q;
      }
      break;
    case AttentionMaskKind::kDialogueCausal:
      for (Eigen::Index q = 0; q < n; ++q) {
        const int tq = lay.entries[static_cast<std::size_t>(q)].turn;
        for (Eigen::Index k = 0; k < n; ++k) {
          mask(q, k) = lay.entries[static_cast<std::size_t>(k)].turn <= tq;
        }
      }
      break;
  }
  return mask;
}

AttentionMaskKind parse_attention_kind(std::string_view name) {
  if (name == "causal") return AttentionMaskKind::kCausal;
  if (name == "dialogue_causal") return AttentionMaskKind::kDialogueCausal;
  if (name == "none" || name == "no_mask") return AttentionMaskKind::kNoMask;
  throw ConfigError("unknown attention kind: " + std::string(name));
}

std::string_view to_string(AttentionMaskKind kind) {
  switch (kind) {
    case AttentionMaskKind::kCausal:
      return "causal";
    case AttentionMaskKind::kDialogueCausal:
      return "dialogue_causal";
    case AttentionMaskKind::kNoMask:
      return "none";
  }
  return "?";
}

CorpusClass parse_corpus_class(std::string_view name) {
  if (name == "DIRECT") return CorpusClass::kDirect;
  if (name == "REASONING") return CorpusClass::kReasoning;
  throw ValidationError("unknown corpus class: " + std::string(name));
}

std::string_view to_string(CorpusClass cls) {
  return cls == CorpusClass::kDirect ? "DIRECT" : "REASONING";
}

std::string_view to_string(Tag tag) {
  switch (tag) {
    case Tag::kNone:
      return "NONE";
    case Tag::kThink:
      return "THINK";
    case Tag::kNoThink:
      return "NO_THINK";
  }
  return "?";
}

namespace {

void append_tag(ConversationExample& ex, Token tag_token, Tag tag) {
  for (Turn& turn : ex.turns) turn.prompt.push_back(tag_token);
  ex.tag = tag;
}

}  // namespace

std::vector<ConversationExample> apply_tag_policy(
    std::vector<ConversationExample> examples, const Vocabulary& vocab,
    Rng& rng, const TagPolicy& policy) {
  if (examples.empty()) return examples;
  const Token think = vocab.think();
  const Token no_think = vocab.no_think();

  std::vector<std::size_t> reasoning;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].cls == CorpusClass::kDirect) {
      append_tag(examples[i], no_think, Tag::kNoThink);
    } else {
      reasoning.push_back(i);
    }
  }
  // Uniformly random subset of fixed size: a partial Fisher-Yates shuffle.
  const auto n_think = static_cast<std::size_t>(
      std::llround(policy.think_fraction * static_cast<double>(reasoning.size())));
  for (std::size_t i = 0; i < n_think; ++i) {
    const std::size_t j = i + rng.index(reasoning.size() - i);
    std::swap(reasoning[i], reasoning[j]);
    append_tag(examples[reasoning[i]], think, Tag::kThink);
  }
  return examples;
}

}  // namespace maskdiff
