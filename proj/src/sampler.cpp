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

#include "maskdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace maskdiff {

RemaskStrategy parse_remask(std::string_view name) {
  if (name == "random") return RemaskStrategy::kRandom;
  if (name == "low_confidence") return RemaskStrategy::kLowConfidence;
  throw ConfigError("unknown remask strategy: " + std::string(name));
}

std::string_view to_string(RemaskStrategy strategy) {
  return strategy == RemaskStrategy::kRandom ? "random" : "low_confidence";
}

int unmask_count(int k, int length, int steps) {
  auto ceil_div = [](long long a, long long b) { return static_cast<int>((a + b - 1) / b); };
  return ceil_div(static_cast<long long>(k) * length, steps) -
         ceil_div(static_cast<long long>(k - 1) * length, steps);
}

std::vector<int> remask_select(std::span<const int> positions,
                               std::span<const double> confidences, int n_keep,
                               RemaskStrategy strategy, Rng& rng) {
  if (positions.size() != confidences.size()) {
    throw ArgumentError("positions and confidences differ in length");
  }
  if (n_keep < 0 || static_cast<std::size_t>(n_keep) > positions.size()) {
    throw ArgumentError("n_keep out of range");
  }
  std::vector<std::size_t> idx(positions.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto keep = static_cast<std::size_t>(n_keep);
  if (strategy == RemaskStrategy::kRandom) {
    for (std::size_t i = 0; i < keep; ++i) {
      std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    }
  } else {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
      return positions[a] < positions[b];
    });
  }
  std::vector<int> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(positions[idx[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Choice {
  Token token;
  double confidence;
};

Choice choose_token(const Eigen::Ref<const Eigen::RowVectorXd>& probs, double temperature,
                    Rng& rng) {
  if (temperature == 0.0) {
    Eigen::Index best = 0;
    for (Eigen::Index v = 1; v < probs.size(); ++v) {
      if (probs[v] > probs[best]) best = v;
    }
    return {static_cast<Token>(best), probs[best]};
  }
  std::vector<double> weights(static_cast<std::size_t>(probs.size()));
  if (temperature == 1.0) {
    for (Eigen::Index v = 0; v < probs.size(); ++v) weights[static_cast<std::size_t>(v)] = probs[v];
  } else {
    // Tempered in log space relative to the peak to avoid underflow.
    const double peak = std::log(probs.maxCoeff());
    for (Eigen::Index v = 0; v < probs.size(); ++v) {
      weights[static_cast<std::size_t>(v)] =
          probs[v] > 0.0 ? std::exp((std::log(probs[v]) - peak) / temperature) : 0.0;
    }
  }
  const auto pick = static_cast<Eigen::Index>(sample_categorical(weights, rng.uniform()));
  return {static_cast<Token>(pick), probs[pick]};
}

}  // namespace

Generation generate(const MaskPredictor& predictor, const ConversationExample& history,
                    const Vocabulary& vocab, const SamplerConfig& cfg) {
  if (cfg.gen_length < 1) throw ValidationError("gen_length must be >= 1");
  if (cfg.steps < 1) throw ValidationError("steps must be >= 1");
  if (!(cfg.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (cfg.block_size < 0) throw ValidationError("block_size must be >= 0");
  if (history.turns.empty() || !history.turns.back().response.empty()) {
    throw ValidationError("history must end with a prompt awaiting a response");
  }
  const int length = cfg.gen_length;
  const int steps = std::min(cfg.steps, length);
  const int turn = static_cast<int>(history.turns.size()) - 1;
  Rng rng = Rng::stream(cfg.seed, "sample", static_cast<std::uint64_t>(turn));

  ConversationExample ex = history;
  ex.turns.back().response.assign(static_cast<std::size_t>(length), vocab.mask());
  const SequenceLayout lay = layout(ex);
  const std::vector<std::size_t> resp = lay.response_positions(turn);
  PredictorInput input = PredictorInput::from_layout(lay, cfg.attention);

  // Blocks of response positions decoded left to right; one block when off.
  const int block = cfg.block_size > 0 ? std::min(cfg.block_size, length) : length;
  const int n_blocks = (length + block - 1) / block;
  const int block_steps = std::max(1, steps / n_blocks);

  Generation out;
  std::vector<bool> finalized(static_cast<std::size_t>(length), false);
  int global_step = 0;
  for (int b = 0; b < n_blocks; ++b) {
    const int lo = b * block;
    const int hi = std::min(length, lo + block);
    const int block_len = hi - lo;
    const int s_steps = std::min(block_steps, block_len);
    for (int k = 1; k <= s_steps; ++k) {
      TraceStep trace;
      trace.step = ++global_step;
      trace.t = 1.0 - static_cast<double>(k - 1) / s_steps;
      trace.s = 1.0 - static_cast<double>(k) / s_steps;

      const PredictionGrid grid = predictor.predict(input);
      std::vector<int> candidates;
      std::vector<double> confidences;
      std::vector<Token> chosen(static_cast<std::size_t>(length), vocab.mask());
      for (int j = 0; j < length; ++j) {
        if (finalized[static_cast<std::size_t>(j)] || j < lo || j >= hi) continue;
        const auto row = static_cast<Eigen::Index>(resp[static_cast<std::size_t>(j)]);
        const Choice c = choose_token(grid.row(row), cfg.temperature, rng);
        chosen[static_cast<std::size_t>(j)] = c.token;
        candidates.push_back(j);
        confidences.push_back(c.confidence);
      }
      const int n_keep = unmask_count(k, block_len, s_steps);
      const std::vector<int> kept = remask_select(candidates, confidences, n_keep, cfg.strategy, rng);
      for (int j : kept) {
        finalized[static_cast<std::size_t>(j)] = true;
        input.tokens[resp[static_cast<std::size_t>(j)]] = chosen[static_cast<std::size_t>(j)];
        trace.finalized.push_back(j);
        const auto it = std::find(candidates.begin(), candidates.end(), j);
        trace.confidences.push_back(confidences[static_cast<std::size_t>(it - candidates.begin())]);
      }
      out.trace.steps.push_back(std::move(trace));
    }
  }

  for (std::size_t j = 0; j < resp.size(); ++j) out.raw.push_back(input.tokens[resp[j]]);
  out.response = out.raw;
  while (!out.response.empty() &&
         (out.response.back() == vocab.pad() || out.response.back() == vocab.eos())) {
    out.response.pop_back();
  }
  return out;
}

std::vector<std::vector<Token>> multi_turn_chat(const MaskPredictor& predictor,
                                                const std::optional<Grid>& image,
                                                std::span<const std::vector<Token>> prompts,
                                                const Vocabulary& vocab,
                                                const SamplerConfig& cfg,
                                                std::vector<DenoiseTrace>* traces) {
  if (prompts.empty()) throw ValidationError("multi_turn_chat needs at least one prompt");
  ConversationExample history;
  history.image = image;
  std::vector<std::vector<Token>> responses;
  for (const std::vector<Token>& prompt : prompts) {
    history.turns.push_back({prompt, {}});
    Generation gen = generate(predictor, history, vocab, cfg);
    history.turns.back().response = gen.response;
    responses.push_back(std::move(gen.response));
    if (traces) traces->push_back(std::move(gen.trace));
  }
  return responses;
}

void write_trace_csv(std::ostream& out, const DenoiseTrace& trace) {
  out << "step,t,s,finalized_positions,confidences\n";
  out.precision(17);
  for (const TraceStep& st : trace.steps) {
    out << st.step << ',' << st.t << ',' << st.s << ',';
    for (std::size_t i = 0; i < st.finalized.size(); ++i) {
      out << (i ? ";" : "") << st.finalized[i];
    }
    out << ',';
    for (std::size_t i = 0; i < st.confidences.size(); ++i) {
      out << (i ? ";" : "") << st.confidences[i];
    }
    out << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const DenoiseTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write trace: " + path.string());
  write_trace_csv(out, trace);
}

}  // namespace maskdiff
