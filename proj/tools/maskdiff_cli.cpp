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

// maskdiff command-line tool.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "maskdiff/checkpoint.hpp"
#include "maskdiff/config.hpp"
#include "maskdiff/dataset.hpp"
#include "maskdiff/harness.hpp"

using namespace maskdiff;

namespace {

std::vector<Token> parse_tokens(const std::string& text) {
  std::vector<Token> out;
  std::string item;
  std::istringstream in(text);
  while (in >> item) {
    for (char& c : item) c = c == ',' ? ' ' : c;
    std::istringstream parts(item);
    Token t;
    while (parts >> t) out.push_back(t);
  }
  return out;
}

// "HxW:c0,c1,..." in row-major order.
Grid parse_grid(const std::string& text) {
  const auto x = text.find('x');
  const auto colon = text.find(':');
  if (x == std::string::npos || colon == std::string::npos || x > colon) {
    throw ArgumentError("grid must look like HxW:c0,c1,...");
  }
  const int h = std::stoi(text.substr(0, x));
  const int w = std::stoi(text.substr(x + 1, colon - x - 1));
  return Grid(h, w, parse_tokens(text.substr(colon + 1)));
}

std::filesystem::path under(const std::filesystem::path& dir, const std::filesystem::path& p) {
  return p.is_absolute() ? p : dir / p;
}

void print_tokens(std::ostream& out, std::span<const Token> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
  out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-diffusion multimodal toy engine"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "Root seed (overrides config)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides config)");

  auto* make_data = app.add_subcommand("make-data", "Write train/eval JSONL corpora");
  std::optional<std::size_t> train_size, eval_size;
  std::optional<std::string> family;
  make_data->add_option("--train-size", train_size);
  make_data->add_option("--eval-size", eval_size);
  make_data->add_option("--family", family, "caption|color_qa|count_qa|dialogue");

  auto* train = app.add_subcommand("train", "Run the staged training plan");
  std::string train_data;
  train->add_option("--data", train_data, "Training JSONL (default: generated split)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on an eval corpus");
  std::string eval_ckpt, eval_data;
  std::optional<std::string> eval_remask;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint (default: <out-dir>/model.ckpt)");
  eval->add_option("--data", eval_data, "Eval JSONL (default: <out-dir>/eval.jsonl)");
  eval->add_option("--remask", eval_remask, "random|low_confidence");

  auto* sample = app.add_subcommand("sample", "Generate responses turn by turn");
  std::string ckpt, trace_path, grid_text, remask, attn;
  std::vector<std::string> prompts;
  std::optional<int> steps, gen_length, block_size;
  std::optional<double> temperature;
  sample->add_option("--ckpt", ckpt)->required();
  sample->add_option("--prompt", prompts, "Prompt tokens, one option per turn")->required();
  sample->add_option("--grid", grid_text, "Image grid HxW:c0,c1,...");
  sample->add_option("--steps", steps);
  sample->add_option("--gen-length", gen_length);
  sample->add_option("--remask", remask, "random|low_confidence");
  sample->add_option("--attn", attn, "causal|dialogue_causal|none");
  sample->add_option("--temperature", temperature);
  sample->add_option("--block-size", block_size);
  sample->add_option("--trace", trace_path, "Trace CSV (relative to out-dir)");

  auto* ablate = app.add_subcommand("ablate", "Attention / remasking ablation table");

  auto* oracle_check = app.add_subcommand("oracle-check", "Compare the engine to exact oracles");
  std::string suite = "all";
  oracle_check->add_option("--suite", suite)->check(
      CLI::IsMember({"forward", "bound", "reverse", "all"}));
  int draws = 100000;
  oracle_check->add_option("--draws", draws, "Monte Carlo draws per check");

  CLI11_PARSE(app, argc, argv);

  try {
    AppConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.pipeline.seed = cfg.pipeline.eval.sampler.seed = cfg.sample.seed = *seed;
    }
    if (out_dir) cfg.out_dir = *out_dir;
    const std::filesystem::path dir = cfg.out_dir;
    std::filesystem::create_directories(dir);

    if (*make_data) {
      if (train_size) cfg.pipeline.train_size = *train_size;
      if (eval_size) cfg.pipeline.eval_size = *eval_size;
      if (family) cfg.pipeline.task.family = parse_task_family(*family);
      const CorpusSplit split =
          make_split(cfg.pipeline.task, cfg.pipeline.train_size, cfg.pipeline.eval_size, cfg.seed);
      write_jsonl(dir / "train.jsonl", split.train);
      write_jsonl(dir / "eval.jsonl", split.eval);
      std::cout << "wrote " << split.train.size() << " train and " << split.eval.size()
                << " eval examples to " << dir << '\n';
    } else if (*train) {
      const ModelConfig mc = model_for_task(cfg.pipeline.model, cfg.pipeline.task);
      std::vector<ConversationExample> corpus =
          train_data.empty()
              ? make_split(cfg.pipeline.task, cfg.pipeline.train_size, cfg.pipeline.eval_size,
                           cfg.seed)
                    .train
              : read_jsonl(train_data, mc.vocab());
      TinyTransformer model(mc, cfg.seed);
      const auto metrics = train_plan(model, cfg.pipeline.stages, corpus, cfg.seed);
      save_model(dir / "model.ckpt", model,
                 {{"seed", cfg.seed}, {"task", cfg.pipeline.task.to_json()}});
      write_metrics_csv(dir / "metrics.csv", metrics);
      std::ofstream(dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
      if (!metrics.empty()) std::cout << "final loss " << metrics.back().loss << '\n';
      std::cout << "checkpoint " << (dir / "model.ckpt").string() << '\n';
    } else if (*eval) {
      const std::filesystem::path ckpt_path =
          eval_ckpt.empty() ? dir / "model.ckpt" : std::filesystem::path(eval_ckpt);
      const std::filesystem::path data_path =
          eval_data.empty() ? dir / "eval.jsonl" : std::filesystem::path(eval_data);
      const TinyTransformer model = load_model(ckpt_path);
      const auto corpus = read_jsonl(data_path, model.vocab());
      EvalConfig ec = cfg.pipeline.eval;
      if (eval_remask) ec.sampler.strategy = parse_remask(*eval_remask);
      const EvalReport report = evaluate(model, model.vocab(), corpus, ec);
      std::ofstream(dir / "eval.json") << report.to_json().dump(2) << '\n';
      std::cout << report.to_json().dump(2) << '\n';
    } else if (*sample) {
      const TinyTransformer model = load_model(ckpt);
      SamplerConfig sc = cfg.sample;
      if (steps) sc.steps = *steps;
      if (gen_length) sc.gen_length = *gen_length;
      if (temperature) sc.temperature = *temperature;
      if (block_size) sc.block_size = *block_size;
      if (!remask.empty()) sc.strategy = parse_remask(remask);
      if (!attn.empty()) sc.attention = parse_attention_kind(attn);
      std::optional<Grid> image;
      if (!grid_text.empty()) image = parse_grid(grid_text);
      std::vector<std::vector<Token>> turns;
      for (const std::string& p : prompts) turns.push_back(parse_tokens(p));
      std::vector<DenoiseTrace> traces;
      const auto replies = multi_turn_chat(model, image, turns, model.vocab(), sc, &traces);
      for (const auto& r : replies) print_tokens(std::cout, r);
      if (!trace_path.empty()) {
        const std::filesystem::path base = under(dir, trace_path);
        for (std::size_t i = 0; i < traces.size(); ++i) {
          std::filesystem::path p = base;
          if (traces.size() > 1) {
            p.replace_filename(base.stem().string() + ".turn" + std::to_string(i) +
                               base.extension().string());
          }
          write_trace_csv(p, traces[i]);
        }
      }
    } else if (*ablate) {
      AblationSpec spec;
      TaskSpec main_task = cfg.pipeline.task;
      main_task.family = cfg.ablation.family;
      spec.model = model_for_task(cfg.pipeline.model, main_task);
      spec.stages = cfg.pipeline.stages;
      spec.attention_kinds = cfg.ablation.attention;
      spec.strategies = cfg.ablation.remask;
      spec.eval_config = cfg.pipeline.eval;
      spec.seed = cfg.seed;
      CorpusSplit split =
          make_split(main_task, cfg.pipeline.train_size, cfg.pipeline.eval_size, cfg.seed);
      spec.train = std::move(split.train);
      spec.eval = std::move(split.eval);
      if (cfg.ablation.control) {
        TaskSpec control = main_task;
        control.family = TaskFamily::kCaption;
        CorpusSplit c =
            make_split(control, cfg.pipeline.train_size, cfg.pipeline.eval_size, cfg.seed);
        spec.control_train = std::move(c.train);
        spec.control_eval = std::move(c.eval);
      }
      const auto cells = run_ablation(spec);
      const std::string table = format_ablation_table(cells);
      std::ofstream(dir / "ablation.md") << table;
      std::ofstream(dir / "ablation.json") << ablation_json(cells).dump(2) << '\n';
      std::cout << table;
    } else if (*oracle_check) {
      std::vector<OracleCheckRow> rows;
      if (suite == "forward" || suite == "all") {
        const std::vector<double> ts{0.25, 0.5, 0.75};
        for (auto& r : check_forward(cfg.seed, 4, ts, draws)) rows.push_back(r);
      }
      if (suite == "bound" || suite == "all") {
        for (auto& r : check_bound(cfg.seed, 20, 6, draws, 1e-3)) rows.push_back(r);
      }
      if (suite == "reverse" || suite == "all") {
        for (auto& r : check_reverse(cfg.seed, draws, 2, 2, 2)) rows.push_back(r);
      }
      write_oracle_csv(std::cout, rows);
      std::ofstream csv(dir / ("oracle_" + suite + ".csv"));
      write_oracle_csv(csv, rows);
      for (const auto& r : rows) {
        if (!r.pass) return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
