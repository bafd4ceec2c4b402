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

#include <string_view>
#include <vector>

#include "json.hpp"
#include "maskdiff/conversation.hpp"

namespace maskdiff {

enum class TaskFamily {
  kCaption,   // describe every cell: <color><shape> per cell, row-major
  kColorQa,   // "color of cell i?" -> <color>            (perception)
  kCountQa,   // "how many cells of color c?" -> <count>  (reasoning)
  kDialogue,  // caption turn, then a color or count question
};
TaskFamily parse_task_family(std::string_view name);
std::string_view to_string(TaskFamily family);

struct TaskSpec {
  int height = 2;
  int width = 2;
  int n_shapes = 4;
  int n_colors = 4;
  TaskFamily family = TaskFamily::kCaption;
  /// Share of count questions in the second turn of dialogues.
  double count_fraction = 0.5;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

/// Grid-caption world. Content tokens, in id order: numerals 0..H*W, colors,
/// shapes, then the three question tokens. Cell id = color * n_shapes + shape.
class GridCaptionTask {
 public:
  explicit GridCaptionTask(TaskSpec spec);

  const TaskSpec& spec() const { return spec_; }
  int content_vocab() const;
  Vocabulary vocab() const { return Vocabulary(content_vocab()); }
  int cell_ids() const { return spec_.n_colors * spec_.n_shapes; }
  int cells() const { return spec_.height * spec_.width; }
  /// Number of distinct grids.
  double grid_space() const;

  Token numeral(int n) const;
  Token color(int c) const;
  Token shape(int s) const;
  Token q_caption() const;
  Token q_color() const;
  Token q_count() const;
  int color_of(int cell_id) const { return cell_id / spec_.n_shapes; }
  int shape_of(int cell_id) const { return cell_id % spec_.n_shapes; }

  Grid random_grid(Rng& rng) const;
  std::vector<Token> caption(const Grid& grid) const;
  ConversationExample make_example(const Grid& grid, Rng& rng) const;
  ConversationExample make_example(const Grid& grid, TaskFamily family, Rng& rng) const;

 private:
  TaskSpec spec_;
};

std::vector<ConversationExample> make_corpus(const TaskSpec& spec, std::size_t size,
                                             std::uint64_t seed);

struct CorpusSplit {
  std::vector<ConversationExample> train;
  std::vector<ConversationExample> eval;
};

/// Train and eval corpora whose grids never overlap. Eval grids are
/// distinct; train grids are drawn from the remaining grid space.
CorpusSplit make_split(const TaskSpec& spec, std::size_t train_size, std::size_t eval_size,
                       std::uint64_t seed);

}  // namespace maskdiff
