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
#include <fstream>
#include <sstream>

#include "maskdiff/config.hpp"
#include "maskdiff/harness.hpp"
#include "maskdiff/oracle.hpp"
#include "maskdiff/trainer.hpp"

using namespace maskdiff;

namespace {

ConversationExample one_token(Token t) {
  ConversationExample ex;
  ex.turns.push_back({{0}, {t}});
  return ex;
}

ModelConfig tiny_model() {
  ModelConfig c = model_for_task(ModelConfig{}, TaskSpec{});
  c.d_model = 16;
  c.blocks = 1;
  c.ffn_hidden = 32;
  c.projector_hidden = 16;
  c.init_range = 0.1;
  return c;
}

TrainConfig quick(Stage stage, int steps) {
  TrainConfig t;
  t.stage = stage;
  t.steps = steps;
  t.batch_size = 4;
  t.log_every = 5;
  t.seed = 3;
  t.clip_norm = 1.0;
  return t;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("one-token response: estimate centres on -log p") {
  const double p = 0.3;
  const std::vector<double> probs{p, 1 - p};
  const TabularPredictor pred(Joint::dense(2, 1, probs));
  const Vocabulary vocab(2);
  Rng rng(1);
  const LossReport r = mc_loss(one_token(0), pred, vocab, rng, {20000, 1e-3});
  CHECK(std::abs(r.objective + std::log(p)) < 3 * r.standard_error);
  CHECK(r.draws.size() == 20000);
  // Each draw is either 0 (unmasked) or -log(p)/t.
  for (std::size_t i = 0; i < r.draws.size(); ++i) {
    if (r.masked_counts[i] == 0) {
      CHECK(r.draws[i] == 0.0);
    } else {
      CHECK(r.draws[i] == doctest::Approx(-std::log(p) / r.t_values[i]));
    }
    CHECK(r.t_values[i] >= 1e-3);
    CHECK(r.t_values[i] < 1.0);
  }
}

TEST_CASE("perfect predictor has zero loss") {
  const TabularPredictor pred(Joint::point_mass(2, {1, 0, 1}));
  ConversationExample ex;
  ex.turns.push_back({{0}, {1, 0}});
  ex.turns.push_back({{1}, {1}});
  Rng rng(2);
  const LossReport r = mc_loss(ex, pred, Vocabulary(2), rng, {500});
  CHECK(r.objective == 0.0);
}

TEST_CASE("three tokens over two turns agree with the exact bound") {
  Rng jr(5);
  const TabularPredictor pred(random_joint(2, 3, jr));
  ConversationExample ex;
  ex.turns.push_back({{0}, {1, 0}});
  ex.turns.push_back({{1}, {1}});
  const Vocabulary vocab(2);
  const double exact = oracle::exact_bound(ex, pred, vocab);
  Rng rng(6);
  const LossReport r = mc_loss(ex, pred, vocab, rng, {100000, 1e-3});
  CHECK(std::abs(r.objective - exact) < 3 * r.standard_error);
  for (double d : r.draws) CHECK(d >= 0.0);
}

TEST_CASE("mc_loss argument checks") {
  const TabularPredictor pred(Joint::uniform(2, 1));
  Rng rng(1);
  CHECK_THROWS_AS(mc_loss(one_token(0), pred, Vocabulary(2), rng, {0}), ArgumentError);
  ConversationExample empty;
  empty.turns.push_back({{0}, {}});
  CHECK_THROWS_AS(mc_loss(empty, pred, Vocabulary(2), rng), ValidationError);
  const TabularPredictor zero(Joint::point_mass(2, {1}));
  CHECK_THROWS_AS(mc_loss(one_token(0), zero, Vocabulary(2), rng, {200}), NumericError);
}

TEST_CASE("sgd_step arithmetic") {
  ParameterStore params;
  params.add("a", ParamGroup::kLanguage, Eigen::MatrixXd::Constant(2, 2, 1.0));
  params.add("b", ParamGroup::kProjector, Eigen::MatrixXd::Constant(1, 3, 2.0));
  const ParameterStore start = params;

  Gradients zero = params.zeros_like();
  Gradients v = params.zeros_like();
  sgd_step(params, zero, {0, 1, 1}, 0.9, v);
  CHECK(params == start);

  Gradients g = params.zeros_like();
  g[0].setConstant(0.25);
  g[1].setConstant(-0.5);
  v = params.zeros_like();
  sgd_step(params, g, {0, 1, 1}, 0.0, v);
  CHECK(params[0].value.isApproxToConstant(0.75, 0));
  CHECK(params[1].value.isApproxToConstant(2.5, 0));

  // Two steps at momentum 0.9: displacement rate * g * (1 + 1.9).
  params = start;
  v = params.zeros_like();
  sgd_step(params, g, {0, 0.1, 0.1}, 0.9, v);
  sgd_step(params, g, {0, 0.1, 0.1}, 0.9, v);
  CHECK((params[0].value.array() - (1.0 - 0.1 * 0.25 * 2.9)).abs().maxCoeff() < 1e-15);

  // Frozen groups keep parameters and velocity.
  params = start;
  v = params.zeros_like();
  const std::vector<ParamGroup> frozen{ParamGroup::kLanguage};
  sgd_step(params, g, {0, 1, 1}, 0.9, v, frozen);
  CHECK(params[0].value == start[0].value);
  CHECK(v[0].isZero(0.0));
  CHECK(params[1].value != start[1].value);

  Gradients wrong = params.zeros_like();
  wrong[1] = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(sgd_step(params, wrong, {0, 1, 1}, 0.9, v), ValidationError);
}

TEST_CASE("global norm") {
  Gradients g{Eigen::MatrixXd::Constant(1, 2, 3.0), Eigen::MatrixXd::Constant(1, 1, 4.0)};
  CHECK(global_norm(g) == doctest::Approx(std::sqrt(34.0)));
}

TEST_CASE("config validation and stage names") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.rates.language = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epsilon = 0.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  for (Stage s : {Stage::kAlign, Stage::kInstruct, Stage::kReasoning, Stage::kBalanced}) {
    CHECK(parse_stage(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_stage("PRETRAIN"), ConfigError);
  CHECK(frozen_groups(Stage::kAlign).size() == 2);
  CHECK(frozen_groups(Stage::kInstruct).empty());
}

TEST_CASE("stage corpus checks") {
  TaskSpec spec;
  auto captions = make_corpus(spec, 8, 1);
  CHECK_NOTHROW(check_stage_corpus(Stage::kAlign, captions));
  auto no_image = captions;
  for (auto& ex : no_image) ex.image.reset();
  CHECK_THROWS_AS(check_stage_corpus(Stage::kAlign, no_image), ConfigError);
  CHECK_THROWS_AS(check_stage_corpus(Stage::kReasoning, captions), ConfigError);
  CHECK_THROWS_AS(check_stage_corpus(Stage::kBalanced, captions), ConfigError);
  CHECK_THROWS_AS(check_stage_corpus(Stage::kInstruct, {}), ConfigError);

  spec.family = TaskFamily::kDialogue;
  auto mixed = make_corpus(spec, 40, 2);
  Rng rng(3);
  const auto tagged = apply_tag_policy(mixed, GridCaptionTask(spec).vocab(), rng);
  CHECK_NOTHROW(check_stage_corpus(Stage::kBalanced, tagged));
  CHECK_NOTHROW(check_stage_corpus(Stage::kReasoning, mixed));
}

TEST_CASE("ALIGN freezes the language tower") {
  TinyTransformer model(tiny_model(), 1);
  const auto corpus = make_corpus(TaskSpec{}, 32, 4);
  const auto lang = model.params().checksum(ParamGroup::kLanguage);
  const auto proj = model.params().checksum(ParamGroup::kProjector);
  TrainConfig t = quick(Stage::kAlign, 100);
  t.batch_size = 2;
  train_stage(t, model, corpus);
  CHECK(model.params().checksum(ParamGroup::kLanguage) == lang);
  CHECK(model.params().checksum(ParamGroup::kProjector) != proj);
}

TEST_CASE("zero learning rates leave every checksum unchanged") {
  TinyTransformer model(tiny_model(), 2);
  const auto corpus = make_corpus(TaskSpec{}, 16, 5);
  const auto before = model.params().checksum();
  TrainConfig t = quick(Stage::kInstruct, 20);
  t.rates = {0, 0, 0};
  const auto metrics = train_stage(t, model, corpus);
  CHECK(model.params().checksum() == before);
  CHECK(metrics.size() == 4);
}

TEST_CASE("INSTRUCT loss trace decreases") {
  ModelConfig mc = tiny_model();
  mc.d_model = 32;
  mc.ffn_hidden = 64;
  TinyTransformer model(mc, 3);
  const auto corpus = make_corpus(TaskSpec{}, 200, 6);
  TrainConfig t = quick(Stage::kInstruct, 300);
  t.batch_size = 8;
  t.log_every = 10;
  const auto m = train_stage(t, model, corpus);
  REQUIRE(m.size() == 30);
  double first = 0, last = 0;
  for (int i = 0; i < 3; ++i) {
    first += m[static_cast<std::size_t>(i)].loss;
    last += m[m.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(last < first);
  for (const auto& row : m) {
    CHECK(row.t_mean > 0.0);
    CHECK(row.t_mean < 1.0);
    CHECK(row.masked_frac >= 0.0);
    CHECK(row.masked_frac <= 1.0);
  }
}

TEST_CASE("results do not depend on shard count and repeat exactly") {
  const auto corpus = make_corpus(TaskSpec{}, 24, 7);
  TrainConfig t = quick(Stage::kInstruct, 15);
  t.batch_size = 6;
  TinyTransformer a(tiny_model(), 4), b(tiny_model(), 4), c(tiny_model(), 4);
  const auto ma = train_stage(t, a, corpus);
  t.shards = 3;
  const auto mb = train_stage(t, b, corpus);
  t.shards = 1;
  train_stage(t, c, corpus);
  CHECK(a.params() == b.params());
  CHECK(a.params() == c.params());
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma[i].loss == mb[i].loss);
}

TEST_CASE("metrics csv") {
  const std::vector<MetricsRow> rows{{10, 1.5, 0.5, 0.25}};
  const auto path = std::filesystem::temp_directory_path() / "maskdiff_metrics_test.csv";
  write_metrics_csv(path, rows);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "step,loss,t_mean,masked_frac");
  CHECK(line.rfind("10,1.5,0.5,0.25", 0) == 0);
  std::filesystem::remove(path);
}

}

TEST_SUITE("trainer_default") {

TEST_CASE("INSTRUCT on captions with the default config lowers the objective") {
  const AppConfig app = default_config();
  const PipelineConfig& p = app.pipeline;
  TinyTransformer model(model_for_task(p.model, p.task), p.seed);
  const auto corpus = make_split(p.task, p.train_size, p.eval_size, p.seed).train;
  const auto m = train_plan(model, p.stages, corpus, p.seed);
  REQUIRE(m.size() >= 10);
  const std::size_t tenth = m.size() / 10;
  double first = 0, last = 0;
  for (std::size_t i = 0; i < tenth; ++i) {
    first += m[i].loss;
    last += m[m.size() - 1 - i].loss;
  }
  CAPTURE(first / tenth);
  CAPTURE(last / tenth);
  CHECK(last < first);
}

}
