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

#include "maskdiff/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace maskdiff {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, unused] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key " + std::string(where) + "." + key);
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

GroupRates parse_rates(const json& j, GroupRates rates) {
  if (j.is_number()) {
    rates.language = rates.projector = j.get<double>();
    return rates;
  }
  check_keys(j, "lr", {"vision", "language", "projector"});
  read(j, "vision", rates.vision);
  read(j, "language", rates.language);
  read(j, "projector", rates.projector);
  return rates;
}

void parse_train(const json& j, PipelineConfig& p) {
  check_keys(j, "train", {"batch_size", "epsilon", "attention", "momentum", "clip_norm",
                          "log_every", "shards", "stages"});
  TrainConfig base;
  if (!p.stages.empty()) base = p.stages.front().train;
  read(j, "batch_size", base.batch_size);
  read(j, "epsilon", base.epsilon);
  read(j, "momentum", base.momentum);
  read(j, "clip_norm", base.clip_norm);
  read(j, "log_every", base.log_every);
  read(j, "shards", base.shards);
  if (j.contains("attention")) base.attention = parse_attention_kind(j["attention"].get<std::string>());

  std::vector<StagePlan> stages;
  if (j.contains("stages")) {
    for (const json& s : j["stages"]) {
      check_keys(s, "train.stages[]", {"stage", "steps", "lr", "corpus", "apply_tags"});
      StagePlan plan;
      plan.train = base;
      if (s.contains("stage")) plan.train.stage = parse_stage(s["stage"].get<std::string>());
      read(s, "steps", plan.train.steps);
      if (s.contains("lr")) plan.train.rates = parse_rates(s["lr"], plan.train.rates);
      if (s.contains("corpus") && !s["corpus"].is_null()) {
        plan.corpus = s["corpus"].get<std::string>();
      }
      read(s, "apply_tags", plan.apply_tags);
      plan.train.validate();
      stages.push_back(std::move(plan));
    }
  } else {
    for (StagePlan plan : p.stages) {
      const TrainConfig keep = plan.train;
      plan.train = base;
      plan.train.stage = keep.stage;
      plan.train.steps = keep.steps;
      plan.train.rates = keep.rates;
      plan.train.validate();
      stages.push_back(std::move(plan));
    }
  }
  p.stages = std::move(stages);
}

void parse_sampler(const json& j, const char* where, SamplerConfig& s) {
  check_keys(j, where, {"steps", "gen_length", "remask", "attn", "temperature", "block_size"});
  read(j, "steps", s.steps);
  read(j, "gen_length", s.gen_length);
  read(j, "temperature", s.temperature);
  read(j, "block_size", s.block_size);
  if (j.contains("remask")) s.strategy = parse_remask(j["remask"].get<std::string>());
  if (j.contains("attn")) s.attention = parse_attention_kind(j["attn"].get<std::string>());
}

}  // namespace

AppConfig default_config() {
  AppConfig c;
  c.pipeline.task = TaskSpec{};
  c.pipeline.train_size = 5000;
  c.pipeline.eval_size = 500;
  // The +-0.02 ModelConfig default trains too slowly under momentum SGD.
  c.pipeline.model.init_range = 0.1;
  StagePlan instruct;
  instruct.train.stage = Stage::kInstruct;
  instruct.train.steps = 1500;
  instruct.train.batch_size = 32;
  instruct.train.rates = {0.0, 0.05, 0.05};
  instruct.train.momentum = 0.9;
  instruct.train.clip_norm = 1.0;
  instruct.train.log_every = 50;
  instruct.train.shards = 4;
  c.pipeline.stages = {instruct};
  c.pipeline.eval.sampler.steps = 0;
  c.pipeline.eval.sampler.strategy = RemaskStrategy::kLowConfidence;
  c.pipeline.eval.loss_draws = 1;
  c.pipeline.eval.threads = 4;
  return c;
}

AppConfig parse_config(const json& j) {
  AppConfig c = default_config();
  check_keys(j, "config", {"seed", "out_dir", "task", "model", "train", "eval", "sample",
                           "ablation"});
  read(j, "seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("task")) {
    json task = j["task"];
    check_keys(task, "task", {"height", "width", "n_shapes", "n_colors", "family",
                              "count_fraction", "train_size", "eval_size"});
    read(task, "train_size", c.pipeline.train_size);
    read(task, "eval_size", c.pipeline.eval_size);
    task.erase("train_size");
    task.erase("eval_size");
    c.pipeline.task = TaskSpec::from_json(task);
  }
  if (j.contains("model")) {
    json merged = json(c.pipeline.model.to_json());
    merged.update(j["model"]);
    c.pipeline.model = ModelConfig::from_json(merged);
  }
  if (j.contains("train")) parse_train(j["train"], c.pipeline);
  if (j.contains("eval")) {
    json e = j["eval"];
    check_keys(e, "eval", {"steps", "gen_length", "remask", "attn", "temperature", "block_size",
                           "loss_draws", "epsilon", "threads"});
    read(e, "loss_draws", c.pipeline.eval.loss_draws);
    read(e, "epsilon", c.pipeline.eval.epsilon);
    read(e, "threads", c.pipeline.eval.threads);
    e.erase("loss_draws");
    e.erase("epsilon");
    e.erase("threads");
    parse_sampler(e, "eval", c.pipeline.eval.sampler);
  }
  if (j.contains("sample")) parse_sampler(j["sample"], "sample", c.sample);
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    check_keys(a, "ablation", {"attention", "remask", "family", "control"});
    if (a.contains("attention")) {
      c.ablation.attention.clear();
      for (const json& x : a["attention"]) {
        c.ablation.attention.push_back(parse_attention_kind(x.get<std::string>()));
      }
    }
    if (a.contains("remask")) {
      c.ablation.remask.clear();
      for (const json& x : a["remask"]) c.ablation.remask.push_back(parse_remask(x.get<std::string>()));
    }
    if (a.contains("family")) c.ablation.family = parse_task_family(a["family"].get<std::string>());
    read(a, "control", c.ablation.control);
  }
  c.pipeline.seed = c.seed;
  c.pipeline.eval.sampler.seed = c.seed;
  c.sample.seed = c.seed;
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json config_to_json(const AppConfig& c) {
  nlohmann::ordered_json task = c.pipeline.task.to_json();
  task["train_size"] = c.pipeline.train_size;
  task["eval_size"] = c.pipeline.eval_size;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const StagePlan& s : c.pipeline.stages) {
    stages.push_back({{"stage", std::string(to_string(s.train.stage))},
                      {"steps", s.train.steps},
                      {"lr",
                       {{"vision", s.train.rates.vision},
                        {"language", s.train.rates.language},
                        {"projector", s.train.rates.projector}}},
                      {"corpus", s.corpus ? nlohmann::ordered_json(s.corpus->string())
                                          : nlohmann::ordered_json(nullptr)},
                      {"apply_tags", s.apply_tags}});
  }
  const TrainConfig base = c.pipeline.stages.empty() ? TrainConfig{} : c.pipeline.stages[0].train;
  auto sampler = [](const SamplerConfig& s) {
    return nlohmann::ordered_json{{"steps", s.steps},
                                  {"gen_length", s.gen_length},
                                  {"remask", std::string(to_string(s.strategy))},
                                  {"attn", std::string(to_string(s.attention))},
                                  {"temperature", s.temperature},
                                  {"block_size", s.block_size}};
  };
  nlohmann::ordered_json eval = sampler(c.pipeline.eval.sampler);
  eval["loss_draws"] = c.pipeline.eval.loss_draws;
  eval["epsilon"] = c.pipeline.eval.epsilon;
  eval["threads"] = c.pipeline.eval.threads;
  nlohmann::ordered_json att = nlohmann::ordered_json::array();
  for (auto a : c.ablation.attention) att.push_back(std::string(to_string(a)));
  nlohmann::ordered_json rem = nlohmann::ordered_json::array();
  for (auto r : c.ablation.remask) rem.push_back(std::string(to_string(r)));
  return {{"seed", c.seed},
          {"out_dir", c.out_dir.string()},
          {"task", task},
          {"model", c.pipeline.model.to_json()},
          {"train",
           {{"batch_size", base.batch_size},
            {"epsilon", base.epsilon},
            {"attention", std::string(to_string(base.attention))},
            {"momentum", base.momentum},
            {"clip_norm", base.clip_norm},
            {"log_every", base.log_every},
            {"shards", base.shards},
            {"stages", stages}}},
          {"eval", eval},
          {"sample", sampler(c.sample)},
          {"ablation",
           {{"attention", att},
            {"remask", rem},
            {"family", std::string(to_string(c.ablation.family))},
            {"control", c.ablation.control}}}};
}

}  // namespace maskdiff
