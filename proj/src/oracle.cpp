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

#include "maskdiff/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace maskdiff::oracle {

namespace {

// Neumaier summation; the pattern tables reach 2^20 entries.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

}  // namespace

double PatternDistribution::total() const {
  CompensatedSum s;
  for (double p : probs) s.add(p);
  return s.value();
}

double PatternDistribution::marginal(int position) const {
  CompensatedSum m;
  for (std::size_t code = 0; code < probs.size(); ++code) {
    if (code >> position & 1U) m.add(probs[code]);
  }
  return m.value();
}

PatternDistribution enumerate_forward(int length, double t) {
  if (length < 0) throw ArgumentError("negative length");
  if (length > kMaxForwardLength) throw RefusalError("enumerate_forward: N too large");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
  PatternDistribution out;
  out.length = length;
  out.probs.resize(std::size_t{1} << length);
  for (std::size_t code = 0; code < out.probs.size(); ++code) {
    const int m = std::popcount(code);
    out.probs[code] = std::pow(t, m) * std::pow(1.0 - t, length - m);
  }
  return out;
}

double beta_weight(int masked, int length) {
  if (masked < 1 || masked > length) throw ArgumentError("need 1 <= m <= N");
  return std::beta(static_cast<double>(masked), static_cast<double>(length - masked + 1));
}

double truncated_beta_weight(int masked, int length, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ArgumentError("eps must lie in [0, 1)");
  // Subtract the [0, eps] piece, expanded binomially in (1 - t)^(N - m).
  const int n = length - masked;
  double head = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= n; ++j) {
    const int power = masked + j;
    head += (j % 2 ? -binom : binom) * std::pow(eps, power) / power;
    binom = binom * (n - j) / (j + 1);
  }
  return (beta_weight(masked, length) - head) / (1.0 - eps);
}

namespace {

// Sum over every non-empty mask pattern of weight(m) * masked NLL.
double pattern_sum(const ConversationExample& example, const MaskPredictor& predictor,
                   const Vocabulary& vocab, AttentionMaskKind attention,
                   const std::function<double(int, int)>& weight) {
  if (predictor.vocab_size() != vocab.content_size()) {
    throw ValidationError("predictor vocabulary does not match");
  }
  const SequenceLayout clean = layout(example);
  std::vector<std::size_t> response;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.entries[i].role == Role::kResponse) response.push_back(i);
  }
  const int n = static_cast<int>(response.size());
  if (n > kMaxBoundLength) throw RefusalError("exact_bound: response too long to enumerate");
  PredictorInput input = PredictorInput::from_layout(clean, attention);
  double total = 0.0;
  for (std::uint32_t code = 1; code < (1U << n); ++code) {
    for (int j = 0; j < n; ++j) {
      input.tokens[response[j]] =
          (code >> j & 1U) ? vocab.mask() : clean.entries[response[j]].token;
    }
    const PredictionGrid grid = predictor.predict(input);
    double nll = 0.0;
    for (int j = 0; j < n; ++j) {
      if (!(code >> j & 1U)) continue;
      nll -= std::log(grid(static_cast<Eigen::Index>(response[j]), clean.entries[response[j]].token));
    }
    total += weight(std::popcount(code), n) * nll;
  }
  return total;
}

}  // namespace

double exact_bound(const ConversationExample& example, const MaskPredictor& predictor,
                   const Vocabulary& vocab, AttentionMaskKind attention) {
  return pattern_sum(example, predictor, vocab, attention,
                     [](int m, int n) { return beta_weight(m, n); });
}

double exact_truncated_bound(const ConversationExample& example,
                             const MaskPredictor& predictor, const Vocabulary& vocab,
                             double eps, AttentionMaskKind attention) {
  return pattern_sum(example, predictor, vocab, attention,
                     [eps](int m, int n) { return truncated_beta_weight(m, n, eps); });
}

namespace {

struct ReverseEnumerator {
  const MaskPredictor& predictor;
  const ConversationExample& history;
  const Vocabulary& vocab;
  int length;
  int steps;
  RemaskStrategy strategy;
  double temperature;
  AttentionMaskKind attention;
  std::map<std::vector<Token>, double> out;

  int keep_count(int k) const {
    const auto cum = [&](int j) {
      return static_cast<int>(std::ceil(static_cast<double>(j) * length / steps - 1e-12));
    };
    return cum(k) - cum(k - 1);
  }

  PredictionGrid predict(const std::vector<Token>& state, std::vector<std::size_t>& resp) const {
    ConversationExample ex = history;
    ex.turns.back().response = state;
    const SequenceLayout lay = layout(ex);
    resp = lay.response_positions(static_cast<int>(ex.turns.size()) - 1);
    return predictor.predict(PredictorInput::from_layout(lay, attention));
  }

  std::vector<double> token_law(const Eigen::RowVectorXd& probs) const {
    std::vector<double> w(static_cast<std::size_t>(probs.size()));
    if (temperature == 0.0) {
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < probs.size(); ++v) {
        if (probs[v] > probs[best]) best = v;
      }
      w[static_cast<std::size_t>(best)] = 1.0;
      return w;
    }
    double z = 0.0;
    for (Eigen::Index v = 0; v < probs.size(); ++v) {
      w[static_cast<std::size_t>(v)] = probs[v] > 0 ? std::pow(probs[v], 1.0 / temperature) : 0.0;
      z += w[static_cast<std::size_t>(v)];
    }
    for (double& x : w) x /= z;
    return w;
  }

  void visit(const std::vector<Token>& state, int k, double prob) {
    if (prob == 0.0) return;
    if (k > steps) {
      out[state] += prob;
      return;
    }
    std::vector<std::size_t> resp;
    const PredictionGrid grid = predict(state, resp);
    std::vector<int> masked;
    for (int j = 0; j < length; ++j) {
      if (state[static_cast<std::size_t>(j)] == vocab.mask()) masked.push_back(j);
    }
    const int m = static_cast<int>(masked.size());
    const int n_keep = keep_count(k);
    const int kv = vocab.content_size();

    std::vector<std::vector<double>> laws;
    std::vector<Eigen::RowVectorXd> rows;
    for (int j : masked) {
      rows.push_back(grid.row(static_cast<Eigen::Index>(resp[static_cast<std::size_t>(j)])));
      laws.push_back(token_law(rows.back()));
    }
    // Every token assignment to the masked positions.
    std::vector<int> assign(static_cast<std::size_t>(m), 0);
    while (true) {
      double p_assign = prob;
      for (int i = 0; i < m; ++i) p_assign *= laws[i][static_cast<std::size_t>(assign[i])];
      if (p_assign > 0.0) expand_keep(state, k, masked, assign, rows, n_keep, p_assign);
      int pos = 0;
      while (pos < m && ++assign[pos] == kv) assign[pos++] = 0;
      if (pos == m) break;
    }
  }

  void expand_keep(const std::vector<Token>& state, int k, const std::vector<int>& masked,
                   const std::vector<int>& assign, const std::vector<Eigen::RowVectorXd>& rows,
                   int n_keep, double p_assign) {
    const int m = static_cast<int>(masked.size());
    auto apply = [&](std::uint32_t subset, double p) {
      std::vector<Token> next = state;
      for (int i = 0; i < m; ++i) {
        if (subset >> i & 1U) next[static_cast<std::size_t>(masked[i])] = assign[i];
      }
      visit(next, k + 1, p);
    };
    if (strategy == RemaskStrategy::kRandom) {
      std::vector<std::uint32_t> subsets;
      for (std::uint32_t s = 0; s < (1U << m); ++s) {
        if (std::popcount(s) == n_keep) subsets.push_back(s);
      }
      for (std::uint32_t s : subsets) apply(s, p_assign / static_cast<double>(subsets.size()));
      return;
    }
    // Low confidence: keep the n_keep most confident, ties to lower index.
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rows[a][assign[a]] > rows[b][assign[b]];
    });
    std::uint32_t subset = 0;
    for (int i = 0; i < n_keep; ++i) subset |= 1U << order[static_cast<std::size_t>(i)];
    apply(subset, p_assign);
  }
};

}  // namespace

std::map<std::vector<Token>, double> enumerate_reverse(
    const MaskPredictor& predictor, const ConversationExample& history,
    const Vocabulary& vocab, int length, int steps, RemaskStrategy strategy,
    double temperature, AttentionMaskKind attention) {
  if (length < 1 || steps < 1) throw ArgumentError("length and steps must be >= 1");
  if (length > kMaxReverseLength || vocab.content_size() > kMaxReverseVocab ||
      steps > kMaxReverseSteps) {
    throw RefusalError("enumerate_reverse: instance too large to enumerate");
  }
  if (predictor.vocab_size() != vocab.content_size()) {
    throw ValidationError("predictor vocabulary does not match");
  }
  if (history.turns.empty() || !history.turns.back().response.empty()) {
    throw ValidationError("history must end with a prompt awaiting a response");
  }
  ReverseEnumerator e{predictor, history, vocab, length, std::min(steps, length),
                      strategy,  temperature, attention, {}};
  e.visit(std::vector<Token>(static_cast<std::size_t>(length), vocab.mask()), 1, 1.0);
  return std::move(e.out);
}

}  // namespace maskdiff::oracle
