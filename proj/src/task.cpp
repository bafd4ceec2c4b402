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

#include "maskdiff/task.hpp"

#include <cmath>
#include <set>

namespace maskdiff {

TaskFamily parse_task_family(std::string_view name) {
  if (name == "caption") return TaskFamily::kCaption;
  if (name == "color_qa") return TaskFamily::kColorQa;
  if (name == "count_qa") return TaskFamily::kCountQa;
  if (name == "dialogue") return TaskFamily::kDialogue;
  throw ConfigError("unknown task family: " + std::string(name));
}

std::string_view to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::kCaption:
      return "caption";
    case TaskFamily::kColorQa:
      return "color_qa";
    case TaskFamily::kCountQa:
      return "count_qa";
    case TaskFamily::kDialogue:
      return "dialogue";
  }
  return "?";
}

void TaskSpec::validate() const {
  if (height < 1 || width < 1 || height > 4 || width > 4) {
    throw ValidationError("grid dims must lie in 1..4");
  }
  if (n_shapes < 1 || n_colors < 1) {
    throw ValidationError("task needs at least one shape and one color");
  }
  if (!(count_fraction >= 0.0 && count_fraction <= 1.0)) {
    throw ValidationError("count_fraction must lie in [0, 1]");
  }
}

nlohmann::ordered_json TaskSpec::to_json() const {
  return {{"height", height},     {"width", width},
          {"n_shapes", n_shapes}, {"n_colors", n_colors},
          {"family", std::string(maskdiff::to_string(family))},
          {"count_fraction", count_fraction}};
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  TaskSpec s;
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.n_shapes = j.value("n_shapes", s.n_shapes);
  s.n_colors = j.value("n_colors", s.n_colors);
  if (j.contains("family")) s.family = parse_task_family(j["family"].get<std::string>());
  s.count_fraction = j.value("count_fraction", s.count_fraction);
  s.validate();
  return s;
}

GridCaptionTask::GridCaptionTask(TaskSpec spec) : spec_(spec) { spec_.validate(); }

int GridCaptionTask::content_vocab() const {
  return (cells() + 1) + spec_.n_colors + spec_.n_shapes + 3;
}

double GridCaptionTask::grid_space() const {
  return std::pow(static_cast<double>(cell_ids()), cells());
}

Token GridCaptionTask::numeral(int n) const {
  if (n < 0 || n > cells()) throw ArgumentError("numeral out of range");
  return n;
}
Token GridCaptionTask::color(int c) const { return cells() + 1 + c; }
Token GridCaptionTask::shape(int s) const { return cells() + 1 + spec_.n_colors + s; }
Token GridCaptionTask::q_caption() const { return cells() + 1 + spec_.n_colors + spec_.n_shapes; }
Token GridCaptionTask::q_color() const { return q_caption() + 1; }
Token GridCaptionTask::q_count() const { return q_caption() + 2; }

Grid GridCaptionTask::random_grid(Rng& rng) const {
  std::vector<int> cells_ids(static_cast<std::size_t>(cells()));
  for (int& c : cells_ids) c = static_cast<int>(rng.index(static_cast<std::size_t>(cell_ids())));
  return Grid(spec_.height, spec_.width, std::move(cells_ids));
}

std::vector<Token> GridCaptionTask::caption(const Grid& grid) const {
  std::vector<Token> out;
  out.reserve(2 * grid.size());
  for (int id : grid.cells) {
    out.push_back(color(color_of(id)));
    out.push_back(shape(shape_of(id)));
  }
  return out;
}

ConversationExample GridCaptionTask::make_example(const Grid& grid, Rng& rng) const {
  return make_example(grid, spec_.family, rng);
}

ConversationExample GridCaptionTask::make_example(const Grid& grid, TaskFamily family,
                                                  Rng& rng) const {
  ConversationExample ex;
  ex.image = grid;
  auto color_turn = [&]() {
    const int i = static_cast<int>(rng.index(grid.size()));
    return Turn{{q_color(), numeral(i)}, {color(color_of(grid.cells[static_cast<std::size_t>(i)]))}};
  };
  auto count_turn = [&]() {
    const int c = static_cast<int>(rng.index(static_cast<std::size_t>(spec_.n_colors)));
    int count = 0;
    for (int id : grid.cells) count += color_of(id) == c;
    return Turn{{q_count(), color(c)}, {numeral(count)}};
  };
  switch (family) {
    case TaskFamily::kCaption:
      ex.turns.push_back({{q_caption()}, caption(grid)});
      break;
    case TaskFamily::kColorQa:
      ex.turns.push_back(color_turn());
      break;
    case TaskFamily::kCountQa:
      ex.turns.push_back(count_turn());
      ex.cls = CorpusClass::kReasoning;
      break;
    case TaskFamily::kDialogue:
      ex.turns.push_back({{q_caption()}, caption(grid)});
      if (rng.uniform() < spec_.count_fraction) {
        ex.turns.push_back(count_turn());
        ex.cls = CorpusClass::kReasoning;
      } else {
        ex.turns.push_back(color_turn());
      }
      break;
  }
  return ex;
}

std::vector<ConversationExample> make_corpus(const TaskSpec& spec, std::size_t size,
                                             std::uint64_t seed) {
  const GridCaptionTask task(spec);
  Rng rng = Rng::stream(seed, "corpus");
  std::vector<ConversationExample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const Grid grid = task.random_grid(rng);
    out.push_back(task.make_example(grid, rng));
  }
  return out;
}

CorpusSplit make_split(const TaskSpec& spec, std::size_t train_size, std::size_t eval_size,
                       std::uint64_t seed) {
  const GridCaptionTask task(spec);
  if (static_cast<double>(eval_size) >= task.grid_space()) {
    throw ValidationError("grid space too small for a disjoint eval split");
  }
  CorpusSplit out;
  std::set<Grid> held_out;
  Rng eval_rng = Rng::stream(seed, "corpus:eval");
  while (held_out.size() < eval_size) {
    const Grid grid = task.random_grid(eval_rng);
    if (!held_out.insert(grid).second) continue;
    out.eval.push_back(task.make_example(grid, eval_rng));
  }
  Rng train_rng = Rng::stream(seed, "corpus:train");
  while (out.train.size() < train_size) {
    const Grid grid = task.random_grid(train_rng);
    if (held_out.contains(grid)) continue;
    out.train.push_back(task.make_example(grid, train_rng));
  }
  return out;
}

}  // namespace maskdiff
