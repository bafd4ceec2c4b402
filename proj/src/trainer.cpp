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

#include "maskdiff/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

namespace maskdiff {

CorruptionDraw draw_corruption(const SequenceLayout& clean, const Vocabulary& vocab,
                               double epsilon, Rng& rng) {
  CorruptionDraw d;
  d.t = rng.uniform(epsilon, 1.0);
  d.corrupted = corrupt_responses(clean, d.t, rng, vocab);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.entries[i].role == Role::kResponse && d.corrupted.entries[i].token == vocab.mask()) {
      d.masked.push_back(i);
      d.truth.push_back(clean.entries[i].token);
    }
  }
  return d;
}

LossReport mc_loss(const ConversationExample& example, const MaskPredictor& predictor,
                   const Vocabulary& vocab, Rng& rng, const McLossOptions& options) {
  if (options.n_draws < 1) throw ArgumentError("mc_loss needs n_draws >= 1");
  if (!(options.epsilon > 0.0 && options.epsilon < 1.0)) {
    throw ArgumentError("epsilon must lie in (0, 1)");
  }
  if (example.response_tokens() == 0) {
    throw ValidationError("mc_loss needs at least one response token");
  }
  const SequenceLayout clean = layout(example);
  LossReport report;
  report.draws.reserve(static_cast<std::size_t>(options.n_draws));
  for (int n = 0; n < options.n_draws; ++n) {
    const CorruptionDraw d = draw_corruption(clean, vocab, options.epsilon, rng);
    double value = 0.0;
    if (!d.masked.empty()) {
      const PredictionGrid grid =
          predictor.predict(PredictorInput::from_layout(d.corrupted, options.attention));
      double nll = 0.0;
      for (std::size_t j = 0; j < d.masked.size(); ++j) {
        nll -= std::log(grid(static_cast<Eigen::Index>(d.masked[j]), d.truth[j]));
      }
      value = nll / d.t;
      if (!std::isfinite(value)) throw NumericError("predictor gave zero mass to a true token");
    }
    report.draws.push_back(value);
    report.masked_counts.push_back(d.masked.size());
    report.t_values.push_back(d.t);
  }
  const double n = static_cast<double>(report.draws.size());
  const double mean = std::accumulate(report.draws.begin(), report.draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : report.draws) ss += (v - mean) * (v - mean);
  report.objective = mean;
  report.standard_error = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  return report;
}

TrainingTerm make_training_term(const CorruptionDraw& draw, AttentionMaskKind attention) {
  TrainingTerm term;
  term.input = PredictorInput::from_layout(draw.corrupted, attention);
  term.targets.assign(draw.corrupted.size(), -1);
  for (std::size_t j = 0; j < draw.masked.size(); ++j) term.targets[draw.masked[j]] = draw.truth[j];
  term.weight = 1.0 / draw.t;
  return term;
}

// ---------------------------------------------------------------------------

double GroupRates::of(ParamGroup group) const {
  switch (group) {
    case ParamGroup::kVision:
      return vision;
    case ParamGroup::kLanguage:
      return language;
    case ParamGroup::kProjector:
      return projector;
  }
  return 0.0;
}

void sgd_step(ParameterStore& params, const Gradients& grads, const GroupRates& rates,
              double momentum, Gradients& velocity, std::span<const ParamGroup> frozen) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw ValidationError("gradient/velocity count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (grads[i].rows() != p.value.rows() || grads[i].cols() != p.value.cols() ||
        velocity[i].rows() != p.value.rows() || velocity[i].cols() != p.value.cols()) {
      throw ValidationError("shape mismatch for parameter " + p.name);
    }
    if (std::find(frozen.begin(), frozen.end(), p.group) != frozen.end()) continue;
    const double rate = rates.of(p.group);
    if (rate < 0.0) throw ConfigError("negative learning rate");
    velocity[i] = momentum * velocity[i] + grads[i];
    p.value -= rate * velocity[i];
  }
}

double global_norm(const Gradients& grads) {
  double ss = 0.0;
  for (const auto& g : grads) ss += g.squaredNorm();
  return std::sqrt(ss);
}

// ---------------------------------------------------------------------------

Stage parse_stage(std::string_view raw) {
  std::string name(raw);
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (name == "ALIGN") return Stage::kAlign;
  if (name == "INSTRUCT") return Stage::kInstruct;
  if (name == "REASONING") return Stage::kReasoning;
  if (name == "BALANCED") return Stage::kBalanced;
  throw ConfigError("unknown stage: " + std::string(raw));
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kAlign:
      return "ALIGN";
    case Stage::kInstruct:
      return "INSTRUCT";
    case Stage::kReasoning:
      return "REASONING";
    case Stage::kBalanced:
      return "BALANCED";
  }
  return "?";
}

std::vector<ParamGroup> frozen_groups(Stage stage) {
  if (stage == Stage::kAlign) return {ParamGroup::kVision, ParamGroup::kLanguage};
  return {};
}

void TrainConfig::validate() const {
  if (rates.vision < 0 || rates.language < 0 || rates.projector < 0) {
    throw ConfigError("learning rates must be >= 0");
  }
  if (!(epsilon > 0.0 && epsilon <= 0.1)) throw ConfigError("epsilon must lie in (0, 0.1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (shards < 1) throw ConfigError("shards must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
}

void check_stage_corpus(Stage stage, std::span<const ConversationExample> corpus) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  for (const ConversationExample& ex : corpus) {
    if (ex.response_tokens() == 0) throw ConfigError("training example without response tokens");
  }
  auto any = [&](auto pred) { return std::any_of(corpus.begin(), corpus.end(), pred); };
  auto all = [&](auto pred) { return std::all_of(corpus.begin(), corpus.end(), pred); };
  switch (stage) {
    case Stage::kAlign:
      if (!any([](const ConversationExample& e) { return e.image.has_value(); })) {
        throw ConfigError("ALIGN stage needs image examples");
      }
      break;
    case Stage::kInstruct:
      break;
    case Stage::kReasoning:
      if (!any([](const ConversationExample& e) { return e.cls == CorpusClass::kReasoning; })) {
        throw ConfigError("REASONING stage needs REASONING-class examples");
      }
      break;
    case Stage::kBalanced: {
      const bool direct_tagged = all([](const ConversationExample& e) {
        return e.cls != CorpusClass::kDirect || e.tag == Tag::kNoThink;
      });
      const bool has_think = any([](const ConversationExample& e) { return e.tag == Tag::kThink; });
      if (!direct_tagged || !has_think) {
        throw ConfigError("BALANCED stage needs a tag-mixed corpus (apply the tag policy first)");
      }
      break;
    }
  }
}

namespace {

struct SlotResult {
  Gradients grads;
  double loss = 0.0;
  double t = 0.0;
  std::size_t masked = 0;
  std::size_t response = 0;
};

}  // namespace

std::vector<MetricsRow> train_stage(const TrainConfig& config, TinyTransformer& model,
                                    std::span<const ConversationExample> corpus) {
  config.validate();
  check_stage_corpus(config.stage, corpus);
  const Vocabulary vocab = model.vocab();
  const std::vector<ParamGroup> frozen = frozen_groups(config.stage);
  const std::string stage_name(to_string(config.stage));

  std::vector<SequenceLayout> layouts;
  layouts.reserve(corpus.size());
  for (const ConversationExample& ex : corpus) layouts.push_back(layout(ex));

  Rng data_rng = Rng::stream(config.seed, "data:" + stage_name);
  std::vector<std::size_t> order(corpus.size());
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), data_rng.engine());
      cursor = 0;
    }
    return order[cursor++];
  };

  Gradients velocity = model.params().zeros_like();
  std::vector<MetricsRow> metrics;
  MetricsRow window;
  int window_steps = 0;
  double window_masked = 0.0;
  double window_response = 0.0;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<SlotResult> slots(batch);
  std::vector<std::size_t> batch_idx(batch);

  for (int step = 0; step < config.steps; ++step) {
    for (std::size_t j = 0; j < batch; ++j) batch_idx[j] = next_index();

    auto run_slot = [&](std::size_t j) {
      Rng rng = Rng::stream(config.seed, "mask:" + stage_name, static_cast<std::uint64_t>(step), j);
      const CorruptionDraw d = draw_corruption(layouts[batch_idx[j]], vocab, config.epsilon, rng);
      const TrainingTerm term = make_training_term(d, config.attention);
      LossGradients lg = loss_gradients(model, std::span<const TrainingTerm>(&term, 1));
      slots[j] = {std::move(lg.grads), lg.loss, d.t, d.masked.size(),
                  corpus[batch_idx[j]].response_tokens()};
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.shards), batch);
    if (workers <= 1) {
      for (std::size_t j = 0; j < batch; ++j) run_slot(j);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
          try {
            for (std::size_t j = w; j < batch; j += workers) run_slot(j);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    // Fixed slot order keeps the reduction independent of the worker count.
    Gradients grads = model.params().zeros_like();
    double loss = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
      accumulate(grads, slots[j].grads);
      loss += slots[j].loss;
      window.t_mean += slots[j].t;
      window_masked += static_cast<double>(slots[j].masked);
      window_response += static_cast<double>(slots[j].response);
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    double scale = inv_batch;
    if (config.clip_norm > 0.0) {
      const double norm = global_norm(grads) * inv_batch;
      if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
      if (norm > config.clip_norm) scale *= config.clip_norm / norm;
    }
    for (auto& g : grads) g *= scale;
    sgd_step(model.params(), grads, config.rates, config.momentum, velocity, frozen);

    window.loss += loss * inv_batch;
    ++window_steps;
    if (window_steps == config.log_every || step + 1 == config.steps) {
      MetricsRow row;
      row.step = step + 1;
      row.loss = window.loss / window_steps;
      row.t_mean = window.t_mean / (window_steps * static_cast<double>(batch));
      row.masked_frac = window_response > 0 ? window_masked / window_response : 0.0;
      metrics.push_back(row);
      window = MetricsRow{};
      window_steps = 0;
      window_masked = window_response = 0.0;
    }
  }
  return metrics;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write metrics: " + path.string());
  out << "step,loss,t_mean,masked_frac\n";
  out.precision(17);
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << r.loss << ',' << r.t_mean << ',' << r.masked_frac << '\n';
  }
}

}  // namespace maskdiff
