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

#include "maskdiff/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>

#include "maskdiff/checkpoint.hpp"
#include "maskdiff/dataset.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/oracle.hpp"

namespace maskdiff {

nlohmann::ordered_json EvalReport::to_json() const {
  return {{"exact_match", exact_match},
          {"token_accuracy", token_accuracy},
          {"mean_bound", mean_bound},
          {"examples", examples},
          {"tokens", tokens}};
}

namespace {

struct ExampleScore {
  bool exact = false;
  std::size_t correct = 0;
  std::size_t tokens = 0;
  double bound = 0.0;
};

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return Rng::stream(root, name, index).engine()();
}

ExampleScore score_example(const MaskPredictor& predictor, const Vocabulary& vocab,
                           const ConversationExample& example, std::size_t index,
                           const EvalConfig& cfg) {
  if (example.turns.empty()) throw ValidationError("eval example without turns");
  ConversationExample history = example;
  const std::vector<Token> truth = history.turns.back().response;
  history.turns.back().response.clear();

  SamplerConfig sc = cfg.sampler;
  sc.gen_length = static_cast<int>(truth.size());
  if (sc.steps <= 0) sc.steps = sc.gen_length;
  sc.seed = derive_seed(cfg.sampler.seed, "eval", index);
  const Generation gen = generate(predictor, history, vocab, sc);

  ExampleScore s;
  s.tokens = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) s.correct += gen.raw[i] == truth[i];
  s.exact = s.correct == s.tokens;
  if (cfg.loss_draws > 0) {
    Rng rng = Rng::stream(cfg.sampler.seed, "eval:loss", index);
    s.bound = mc_loss(example, predictor, vocab, rng,
                      {cfg.loss_draws, cfg.epsilon, cfg.sampler.attention})
                  .objective;
  }
  return s;
}

}  // namespace

EvalReport evaluate(const MaskPredictor& predictor, const Vocabulary& vocab,
                    std::span<const ConversationExample> corpus, const EvalConfig& cfg) {
  if (corpus.empty()) throw ValidationError("evaluate needs a non-empty corpus");
  std::vector<ExampleScore> scores(corpus.size());
  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.threads, 1)), 1, corpus.size());
  std::vector<std::exception_ptr> errors(workers);
  auto run = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < corpus.size(); i += workers) {
        scores[i] = score_example(predictor, vocab, corpus[i], i, cfg);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport r;
  std::size_t exact = 0, correct = 0;
  double bound = 0.0;
  for (const ExampleScore& s : scores) {
    exact += s.exact;
    correct += s.correct;
    r.tokens += s.tokens;
    bound += s.bound;
  }
  r.examples = corpus.size();
  r.exact_match = static_cast<double>(exact) / static_cast<double>(r.examples);
  r.token_accuracy = r.tokens ? static_cast<double>(correct) / static_cast<double>(r.tokens) : 0.0;
  r.mean_bound = bound / static_cast<double>(r.examples);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<MetricsRow> train_plan(TinyTransformer& model, std::span<const StagePlan> plan,
                                   const std::vector<ConversationExample>& corpus,
                                   std::uint64_t seed) {
  const Vocabulary vocab = model.vocab();
  std::vector<MetricsRow> all;
  int offset = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const StagePlan& stage = plan[i];
    std::vector<ConversationExample> data =
        stage.corpus ? read_jsonl(*stage.corpus, vocab) : corpus;
    if (stage.apply_tags) {
      Rng rng = Rng::stream(seed, "tags", i);
      data = apply_tag_policy(std::move(data), vocab, rng);
    }
    TrainConfig tc = stage.train;
    tc.seed = seed;
    for (MetricsRow row : train_stage(tc, model, data)) {
      row.step += offset;
      all.push_back(row);
    }
    offset += tc.steps;
  }
  return all;
}

// ---------------------------------------------------------------------------

std::vector<AblationCell> run_ablation(const AblationSpec& spec) {
  if (spec.attention_kinds.empty() || spec.strategies.empty()) {
    throw ConfigError("ablation needs at least one attention kind and one strategy");
  }
  std::vector<AblationCell> cells;
  auto run_corpus = [&](const std::string& name, const std::vector<ConversationExample>& train,
                        const std::vector<ConversationExample>& eval) {
    for (AttentionMaskKind att : spec.attention_kinds) {
      TinyTransformer model(spec.model, spec.seed);
      std::vector<StagePlan> stages = spec.stages;
      for (StagePlan& s : stages) s.train.attention = att;
      train_plan(model, stages, train, spec.seed);
      for (RemaskStrategy strategy : spec.strategies) {
        EvalConfig ec = spec.eval_config;
        ec.sampler.attention = att;
        ec.sampler.strategy = strategy;
        cells.push_back({name, att, strategy, evaluate(model, model.vocab(), eval, ec),
                         model.params().checksum()});
      }
    }
  };
  run_corpus("main", spec.train, spec.eval);
  if (!spec.control_train.empty()) {
    run_corpus("control", spec.control_train,
               spec.control_eval.empty() ? spec.control_train : spec.control_eval);
  }
  return cells;
}

std::string format_ablation_table(std::span<const AblationCell> cells) {
  std::ostringstream out;
  out << "| corpus | attention | remask | exact_match | token_accuracy | mean_bound |\n"
      << "|---|---|---|---|---|---|\n";
  out << std::fixed;
  for (const AblationCell& c : cells) {
    out << "| " << c.corpus << " | " << to_string(c.attention) << " | " << to_string(c.strategy)
        << " | " << std::setprecision(4) << c.report.exact_match << " | " << c.report.token_accuracy
        << " | " << c.report.mean_bound << " |\n";
  }
  return out.str();
}

nlohmann::ordered_json ablation_json(std::span<const AblationCell> cells) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const AblationCell& c : cells) {
    rows.push_back({{"corpus", c.corpus},
                    {"attention", std::string(to_string(c.attention))},
                    {"remask", std::string(to_string(c.strategy))},
                    {"report", c.report.to_json()},
                    {"checksum", c.checksum}});
  }
  return rows;
}

// ---------------------------------------------------------------------------

Joint random_joint(int vocab_size, int length, Rng& rng) {
  std::size_t n = 1;
  for (int i = 0; i < length; ++i) n *= static_cast<std::size_t>(vocab_size);
  std::vector<double> w(n);
  double z = 0.0;
  for (double& x : w) {
    x = -std::log1p(-rng.uniform());
    z += x;
  }
  for (double& x : w) x /= z;
  return Joint::dense(vocab_size, length, w);
}

std::vector<OracleCheckRow> check_forward(std::uint64_t seed, int length,
                                          std::span<const double> ts, int draws,
                                          double p_threshold) {
  std::vector<OracleCheckRow> rows;
  const Sequence x0(std::vector<Token>(static_cast<std::size_t>(length), 0), 2);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double t = ts[k];
    const oracle::PatternDistribution exact = oracle::enumerate_forward(length, t);
    std::vector<double> counts(exact.probs.size(), 0.0);
    Rng rng = Rng::stream(seed, "forward", k);
    for (int d = 0; d < draws; ++d) {
      const MaskedSequence m = forward_mask(x0, t, rng);
      std::size_t code = 0;
      for (int i = 0; i < length; ++i) {
        if (m.entries[static_cast<std::size_t>(i)] == m.mask_id()) code |= std::size_t{1} << i;
      }
      counts[code] += 1.0;
    }
    double chi2 = 0.0, dev = 0.0;
    int cells = 0;
    bool impossible = false;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const double expected = exact.probs[c] * draws;
      dev = std::max(dev, std::abs(counts[c] / draws - exact.probs[c]));
      if (expected == 0.0) {
        impossible = impossible || counts[c] > 0;
        continue;
      }
      chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
      ++cells;
    }
    double p = 1.0;
    if (cells > 1) {
      p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(cells - 1), chi2));
    }
    if (impossible) p = 0.0;
    std::ostringstream name;
    name << "N=" << length << " t=" << t;
    rows.push_back({"forward", name.str(), p, dev, p_threshold, p > p_threshold});
  }
  return rows;
}

std::vector<OracleCheckRow> check_bound(std::uint64_t seed, int predictors, int max_length,
                                        int draws, double epsilon, double z) {
  std::vector<OracleCheckRow> rows;
  const int k = 2;
  const Vocabulary vocab(k);
  for (int p = 0; p < predictors; ++p) {
    Rng rng = Rng::stream(seed, "bound:case", static_cast<std::uint64_t>(p));
    const int n = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_length)));
    const Joint joint = random_joint(k, n, rng);
    const TabularPredictor predictor(joint);
    // Clean response drawn from the joint itself.
    std::vector<double> probs(joint.support_size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = joint.probability(i);
    const std::vector<Token> seq =
        joint.sequence(static_cast<std::size_t>(sample_categorical(probs, rng.uniform())));
    ConversationExample ex;
    if (n >= 2 && rng.bernoulli(0.5)) {
      const auto cut = static_cast<std::ptrdiff_t>(1 + rng.index(static_cast<std::size_t>(n - 1)));
      ex.turns.push_back({{0}, {seq.begin(), seq.begin() + cut}});
      ex.turns.push_back({{1}, {seq.begin() + cut, seq.end()}});
    } else {
      ex.turns.push_back({{0}, seq});
    }
    const double exact = oracle::exact_bound(ex, predictor, vocab);
    Rng mc_rng = Rng::stream(seed, "bound:mc", static_cast<std::uint64_t>(p));
    const LossReport mc = mc_loss(ex, predictor, vocab, mc_rng, {draws, epsilon});
    const double zstat = std::abs(mc.objective - exact) / mc.standard_error;
    std::ostringstream name;
    name << "case=" << p << " N=" << n << " turns=" << ex.turns.size();
    rows.push_back({"bound", name.str() + " ci", zstat, std::abs(mc.objective - exact), z,
                    zstat <= z});
    const double at_eps = oracle::exact_truncated_bound(ex, predictor, vocab, epsilon);
    const double at_half = oracle::exact_truncated_bound(ex, predictor, vocab, epsilon / 2);
    // The floor bias is linear in eps, so halving it removes half the bias.
    const double bias = 2.0 * std::abs(at_eps - at_half);
    rows.push_back({"bound", name.str() + " eps_halving", bias, std::abs(at_eps - exact), 1e-3,
                    bias <= 1e-3});
  }
  return rows;
}

std::vector<OracleCheckRow> check_reverse(std::uint64_t seed, int runs, int length, int k,
                                          int steps, double tv_threshold) {
  const Vocabulary vocab(k);
  Rng rng = Rng::stream(seed, "reverse:joint");
  const TabularPredictor predictor(random_joint(k, length, rng));
  ConversationExample history;
  history.turns.push_back({{0}, {}});
  const auto exact = oracle::enumerate_reverse(predictor, history, vocab, length, steps,
                                               RemaskStrategy::kRandom, 1.0);
  std::map<std::vector<Token>, double> freq;
  SamplerConfig sc;
  sc.gen_length = length;
  sc.steps = steps;
  sc.strategy = RemaskStrategy::kRandom;
  sc.temperature = 1.0;
  for (int r = 0; r < runs; ++r) {
    sc.seed = derive_seed(seed, "reverse:run", static_cast<std::uint64_t>(r));
    freq[generate(predictor, history, vocab, sc).raw] += 1.0 / runs;
  }
  double tv = 0.0, dev = 0.0;
  std::map<std::vector<Token>, double> keys = exact;
  for (const auto& [seq, f] : freq) keys.emplace(seq, 0.0);
  for (const auto& [seq, unused] : keys) {
    const double a = exact.contains(seq) ? exact.at(seq) : 0.0;
    const double b = freq.contains(seq) ? freq.at(seq) : 0.0;
    tv += 0.5 * std::abs(a - b);
    dev = std::max(dev, std::abs(a - b));
  }
  std::ostringstream name;
  name << "L=" << length << " K=" << k << " S=" << steps << " runs=" << runs;
  return {{"reverse", name.str(), tv, dev, tv_threshold, tv <= tv_threshold}};
}

void write_oracle_csv(std::ostream& out, std::span<const OracleCheckRow> rows) {
  out << "suite,case,statistic,max_deviation,threshold,pass\n";
  out << std::setprecision(10);
  for (const OracleCheckRow& r : rows) {
    out << r.suite << ',' << r.name << ',' << r.statistic << ',' << r.max_deviation << ','
        << r.threshold << ',' << (r.pass ? "pass" : "fail") << '\n';
  }
}

// ---------------------------------------------------------------------------

ModelConfig model_for_task(ModelConfig model, const TaskSpec& task) {
  const GridCaptionTask t(task);
  model.content_vocab = t.content_vocab();
  model.cell_ids = t.cell_ids();
  model.max_cells = std::max(model.max_cells, t.cells());
  // image + caption turn + question turn, tags included.
  model.max_positions = std::max(model.max_positions, 3 * t.cells() + 8);
  return model;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const CorpusSplit split = make_split(cfg.task, cfg.train_size, cfg.eval_size, cfg.seed);
  write_jsonl(out_dir / "train.jsonl", split.train);
  write_jsonl(out_dir / "eval.jsonl", split.eval);

  TinyTransformer model(model_for_task(cfg.model, cfg.task), cfg.seed);
  std::vector<MetricsRow> metrics = train_plan(model, cfg.stages, split.train, cfg.seed);
  save_model(out_dir / "model.ckpt", model, {{"seed", cfg.seed}, {"task", cfg.task.to_json()}});
  write_metrics_csv(out_dir / "metrics.csv", metrics);

  const EvalReport report = evaluate(model, model.vocab(), split.eval, cfg.eval);
  std::ofstream(out_dir / "eval.json") << report.to_json().dump(2) << '\n';
  return {std::move(model), report, std::move(metrics)};
}

}  // namespace maskdiff
