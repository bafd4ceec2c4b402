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

#include "maskdiff/transformer.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace maskdiff {

using Eigen::MatrixXd;

void ModelConfig::validate() const {
  if (content_vocab < 2) throw ConfigError("content_vocab must be >= 2");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
  if (blocks < 1) throw ConfigError("need at least one transformer block");
  if (ffn_hidden < 1 || projector_hidden < 1) throw ConfigError("hidden sizes must be >= 1");
  if (max_positions < 1) throw ConfigError("max_positions must be >= 1");
  if (cell_ids < 1 || max_cells < 1) throw ConfigError("vision stub sizes must be >= 1");
  if (!(init_range >= 0.0)) throw ConfigError("init_range must be >= 0");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  return {{"content_vocab", content_vocab}, {"tag_tokens", tag_tokens},
          {"d_model", d_model},             {"heads", heads},
          {"blocks", blocks},               {"ffn_hidden", ffn_hidden},
          {"max_positions", max_positions}, {"cell_ids", cell_ids},
          {"max_cells", max_cells},         {"projector_hidden", projector_hidden},
          {"init_range", init_range},       {"ln_eps", ln_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.content_vocab = j.value("content_vocab", c.content_vocab);
  c.tag_tokens = j.value("tag_tokens", c.tag_tokens);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.cell_ids = j.value("cell_ids", c.cell_ids);
  c.max_cells = j.value("max_cells", c.max_cells);
  c.projector_hidden = j.value("projector_hidden", c.projector_hidden);
  c.init_range = j.value("init_range", c.init_range);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.validate();
  return c;
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kVision:
      return "vision";
    case ParamGroup::kLanguage:
      return "language";
    case ParamGroup::kProjector:
      return "projector";
  }
  return "?";
}

ParamGroup parse_param_group(std::string_view name) {
  if (name == "vision") return ParamGroup::kVision;
  if (name == "language") return ParamGroup::kLanguage;
  if (name == "projector") return ParamGroup::kProjector;
  throw ValidationError("unknown parameter group: " + std::string(name));
}

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, ParamGroup group, MatrixXd value) {
  params_.push_back({std::move(name), group, std::move(value)});
  return params_.size() - 1;
}

std::size_t ParameterStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ValidationError("no parameter named " + std::string(name));
}

Gradients ParameterStore::zeros_like() const {
  Gradients out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) {
    out.push_back(MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
  return out;
}

namespace {

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t ParameterStore::checksum(ParamGroup group) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter& p : params_) {
    if (p.group != group) continue;
    h = fnv_bytes(h, p.name.data(), p.name.size());
    h = fnv_bytes(h, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter& p : params_) {
    h = fnv_bytes(h, p.name.data(), p.name.size());
    h = fnv_bytes(h, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& a = params_[i];
    const Parameter& b = other.params_[i];
    if (a.name != b.name || a.group != b.group || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols()) {
      return false;
    }
    if (std::memcmp(a.value.data(), b.value.data(),
                    sizeof(double) * static_cast<std::size_t>(a.value.size())) != 0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// VisionStub

MatrixXd VisionStub::encode(const Grid& grid) const {
  if (static_cast<int>(grid.size()) > max_cells_) {
    throw ValidationError("grid has more cells than the vision stub supports");
  }
  MatrixXd features = MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), feature_dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int id = grid.cells[i];
    if (id < 0 || id >= cell_ids_) {
      throw ValidationError("grid cell id out of range: " + std::to_string(id));
    }
    const auto r = static_cast<Eigen::Index>(i);
    features(r, id) = 1.0;
    features(r, cell_ids_ + r) = 1.0;
  }
  return features;
}

// ---------------------------------------------------------------------------
// TinyTransformer

TinyTransformer::TinyTransformer(const ModelConfig& config, std::uint64_t seed)
    : config_(config), vision_(config.cell_ids, config.max_cells) {
  config_.validate();
  Rng rng = Rng::stream(seed, "init");
  const double r = config_.init_range;
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-r, r);
    }
    return m;
  };
  const int d = config_.d_model;
  const int dp = config_.projector_hidden;
  const int f = config_.ffn_hidden;
  const auto L = ParamGroup::kLanguage;
  const auto P = ParamGroup::kProjector;

  params_.add("projector.w1", P, uniform(config_.vision_dim(), dp));
  params_.add("projector.b1", P, MatrixXd::Zero(1, dp));
  params_.add("projector.w2", P, uniform(dp, d));
  params_.add("projector.b2", P, MatrixXd::Zero(1, d));
  params_.add("embed.token", L, uniform(config_.vocab().total_size(), d));
  params_.add("embed.position", L, uniform(config_.max_positions, d));
  params_.add("embed.role", L, uniform(kRoleCount, d));
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    params_.add(pre + "ln1.gain", L, MatrixXd::Ones(1, d));
    params_.add(pre + "ln1.bias", L, MatrixXd::Zero(1, d));
    params_.add(pre + "attn.wq", L, uniform(d, d));
    params_.add(pre + "attn.wk", L, uniform(d, d));
    params_.add(pre + "attn.wv", L, uniform(d, d));
    params_.add(pre + "attn.wo", L, uniform(d, d));
    params_.add(pre + "attn.bo", L, MatrixXd::Zero(1, d));
    params_.add(pre + "ln2.gain", L, MatrixXd::Ones(1, d));
    params_.add(pre + "ln2.bias", L, MatrixXd::Zero(1, d));
    params_.add(pre + "ffn.w1", L, uniform(d, f));
    params_.add(pre + "ffn.b1", L, MatrixXd::Zero(1, f));
    params_.add(pre + "ffn.w2", L, uniform(f, d));
    params_.add(pre + "ffn.b2", L, MatrixXd::Zero(1, d));
  }
  params_.add("final_ln.gain", L, MatrixXd::Ones(1, d));
  params_.add("final_ln.bias", L, MatrixXd::Zero(1, d));
  params_.add("head.w", L, uniform(d, config_.content_vocab));
  params_.add("head.b", L, MatrixXd::Zero(1, config_.content_vocab));
  build_index();
}

TinyTransformer::TinyTransformer(const ModelConfig& config, ParameterStore params)
    : config_(config), vision_(config.cell_ids, config.max_cells), params_(std::move(params)) {
  config_.validate();
  build_index();
  // Shape check against a freshly initialized reference.
  const TinyTransformer reference(config_, 0);
  if (reference.params_.size() != params_.size()) {
    throw ValidationError("checkpoint tensor count does not match model config");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& want = reference.params_[i];
    const Parameter& got = params_[i];
    if (want.name != got.name || want.group != got.group ||
        want.value.rows() != got.value.rows() || want.value.cols() != got.value.cols()) {
      throw ValidationError("checkpoint tensor " + got.name + " does not match model config");
    }
  }
}

void TinyTransformer::build_index() {
  proj_w1_ = params_.index_of("projector.w1");
  proj_b1_ = params_.index_of("projector.b1");
  proj_w2_ = params_.index_of("projector.w2");
  proj_b2_ = params_.index_of("projector.b2");
  tok_embed_ = params_.index_of("embed.token");
  pos_embed_ = params_.index_of("embed.position");
  role_embed_ = params_.index_of("embed.role");
  block_idx_.clear();
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    auto at = [&](const char* n) { return params_.index_of(pre + n); };
    block_idx_.push_back({at("ln1.gain"), at("ln1.bias"), at("attn.wq"), at("attn.wk"),
                          at("attn.wv"), at("attn.wo"), at("attn.bo"), at("ln2.gain"),
                          at("ln2.bias"), at("ffn.w1"), at("ffn.b1"), at("ffn.w2"),
                          at("ffn.b2")});
  }
  final_gain_ = params_.index_of("final_ln.gain");
  final_bias_ = params_.index_of("final_ln.bias");
  head_w_ = params_.index_of("head.w");
  head_b_ = params_.index_of("head.b");
}

MatrixXd TinyTransformer::project(const MatrixXd& features) const {
  if (features.cols() != config_.vision_dim()) {
    throw ValidationError("feature dimension does not match projector input");
  }
  const MatrixXd hidden =
      nn::gelu((features * p(proj_w1_)).rowwise() + row(proj_b1_));
  return (hidden * p(proj_w2_)).rowwise() + row(proj_b2_);
}

PredictionGrid TinyTransformer::predict(const PredictorInput& input) const {
  return forward(input).probs;
}

ForwardResult TinyTransformer::forward(const PredictorInput& input) const {
  input.validate();
  const auto n = static_cast<Eigen::Index>(input.size());
  if (n == 0) throw ValidationError("empty predictor input");
  if (n > config_.max_positions) {
    throw ValidationError("sequence longer than max_positions");
  }
  const int rows = config_.vocab().total_size();
  for (Eigen::Index q = 0; q < n; ++q) {
    if (!input.attention.row(q).any()) {
      throw ValidationError("attention row " + std::to_string(q) + " blocks every key");
    }
    const auto i = static_cast<std::size_t>(q);
    if (input.roles[i] != Role::kImage && (input.tokens[i] < 0 || input.tokens[i] >= rows)) {
      throw ValidationError("token id outside embedding table");
    }
  }

  ForwardResult out;
  ForwardCache& c = out.cache;
  c.input = input;
  const bool has_image =
      std::find(input.roles.begin(), input.roles.end(), Role::kImage) != input.roles.end();
  if (has_image) {
    c.image_features = vision_.encode(*input.image);
    c.proj_pre = (c.image_features * p(proj_w1_)).rowwise() + row(proj_b1_);
    c.proj_hidden = nn::gelu(c.proj_pre);
    c.image_embed = (c.proj_hidden * p(proj_w2_)).rowwise() + row(proj_b2_);
  }

  const int d = config_.d_model;
  MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const Role role = input.roles[ii];
    if (role == Role::kImage) {
      x.row(i) = c.image_embed.row(input.tokens[ii]);
    } else {
      x.row(i) = p(tok_embed_).row(input.tokens[ii]);
    }
    x.row(i) += p(pos_embed_).row(i) + p(role_embed_).row(static_cast<int>(role));
  }

  const int heads = config_.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.blocks.resize(block_idx_.size());
  for (std::size_t b = 0; b < block_idx_.size(); ++b) {
    const BlockIndex& ix = block_idx_[b];
    BlockCache& bc = c.blocks[b];
    bc.input = x;
    bc.normed1 = nn::layer_norm(x, row(ix.ln1_gain), row(ix.ln1_bias), config_.ln_eps, bc.ln1);
    bc.q = bc.normed1 * p(ix.wq);
    bc.k = bc.normed1 * p(ix.wk);
    bc.v = bc.normed1 * p(ix.wv);
    bc.mixed.resize(n, d);
    bc.attn.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const MatrixXd scores =
          (bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose()) * scale;
      bc.attn[static_cast<std::size_t>(h)] = nn::masked_softmax(scores, input.attention);
      bc.mixed.middleCols(h * dh, dh) =
          bc.attn[static_cast<std::size_t>(h)] * bc.v.middleCols(h * dh, dh);
    }
    bc.after_attn = x + ((bc.mixed * p(ix.wo)).rowwise() + row(ix.bo));
    bc.normed2 = nn::layer_norm(bc.after_attn, row(ix.ln2_gain), row(ix.ln2_bias),
                                config_.ln_eps, bc.ln2);
    bc.hidden_pre = (bc.normed2 * p(ix.w1)).rowwise() + row(ix.b1);
    bc.hidden = nn::gelu(bc.hidden_pre);
    x = bc.after_attn + ((bc.hidden * p(ix.w2)).rowwise() + row(ix.b2));
  }

  c.final_input = x;
  c.final_normed =
      nn::layer_norm(x, row(final_gain_), row(final_bias_), config_.ln_eps, c.final_ln);
  out.logits = (c.final_normed * p(head_w_)).rowwise() + row(head_b_);
  if (!out.logits.allFinite()) {
    throw NumericError("non-finite logits in transformer forward pass");
  }
  out.probs = nn::softmax_rows(out.logits);
  return out;
}

Gradients TinyTransformer::backward(const ForwardCache& c, const MatrixXd& dlogits) const {
  const auto n = static_cast<Eigen::Index>(c.input.size());
  if (dlogits.rows() != n || dlogits.cols() != config_.content_vocab) {
    throw ValidationError("dlogits shape does not match forward pass");
  }
  Gradients g = params_.zeros_like();

  g[head_w_] += c.final_normed.transpose() * dlogits;
  g[head_b_] += dlogits.colwise().sum();
  MatrixXd dx = nn::layer_norm_backward<double>(dlogits * p(head_w_).transpose(),
                                                row(final_gain_), c.final_ln,
                                                g[final_gain_], g[final_bias_]);

  const int d = config_.d_model;
  const int heads = config_.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t b = block_idx_.size(); b-- > 0;) {
    const BlockIndex& ix = block_idx_[b];
    const BlockCache& bc = c.blocks[b];

    // x_out = after_attn + ffn(ln2(after_attn))
    g[ix.w2] += bc.hidden.transpose() * dx;
    g[ix.b2] += dx.colwise().sum();
    const MatrixXd dpre =
        ((dx * p(ix.w2).transpose()).array() * nn::gelu_grad(bc.hidden_pre).array()).matrix();
    g[ix.w1] += bc.normed2.transpose() * dpre;
    g[ix.b1] += dpre.colwise().sum();
    MatrixXd dafter = dx + nn::layer_norm_backward<double>(dpre * p(ix.w1).transpose(),
                                                           row(ix.ln2_gain), bc.ln2,
                                                           g[ix.ln2_gain], g[ix.ln2_bias]);

    // after_attn = input + attn(ln1(input))
    g[ix.wo] += bc.mixed.transpose() * dafter;
    g[ix.bo] += dafter.colwise().sum();
    const MatrixXd dmixed = dafter * p(ix.wo).transpose();
    MatrixXd dq = MatrixXd::Zero(n, d);
    MatrixXd dk = MatrixXd::Zero(n, d);
    MatrixXd dv = MatrixXd::Zero(n, d);
    for (int h = 0; h < heads; ++h) {
      const MatrixXd& probs = bc.attn[static_cast<std::size_t>(h)];
      const MatrixXd dout = dmixed.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) += probs.transpose() * dout;
      const MatrixXd dprobs = dout * bc.v.middleCols(h * dh, dh).transpose();
      const MatrixXd dscores = nn::softmax_backward<double>(probs, dprobs) * scale;
      dq.middleCols(h * dh, dh) += dscores * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) += dscores.transpose() * bc.q.middleCols(h * dh, dh);
    }
    g[ix.wq] += bc.normed1.transpose() * dq;
    g[ix.wk] += bc.normed1.transpose() * dk;
    g[ix.wv] += bc.normed1.transpose() * dv;
    const MatrixXd dnormed1 =
        dq * p(ix.wq).transpose() + dk * p(ix.wk).transpose() + dv * p(ix.wv).transpose();
    dx = dafter + nn::layer_norm_backward<double>(dnormed1, row(ix.ln1_gain), bc.ln1,
                                                  g[ix.ln1_gain], g[ix.ln1_bias]);
  }

  MatrixXd dimage;
  if (c.image_embed.size() > 0) dimage = MatrixXd::Zero(c.image_embed.rows(), d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const Role role = c.input.roles[ii];
    g[pos_embed_].row(i) += dx.row(i);
    g[role_embed_].row(static_cast<int>(role)) += dx.row(i);
    if (role == Role::kImage) {
      dimage.row(c.input.tokens[ii]) += dx.row(i);
    } else {
      g[tok_embed_].row(c.input.tokens[ii]) += dx.row(i);
    }
  }
  if (dimage.size() > 0) {
    g[proj_w2_] += c.proj_hidden.transpose() * dimage;
    g[proj_b2_] += dimage.colwise().sum();
    const MatrixXd dpre =
        ((dimage * p(proj_w2_).transpose()).array() * nn::gelu_grad(c.proj_pre).array())
            .matrix();
    g[proj_w1_] += c.image_features.transpose() * dpre;
    g[proj_b1_] += dpre.colwise().sum();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Loss

bool TrainingTerm::has_targets() const {
  return std::any_of(targets.begin(), targets.end(), [](Token t) { return t >= 0; });
}

namespace {

void check_targets(const TrainingTerm& term, int k) {
  if (term.targets.size() != term.input.size()) {
    throw ValidationError("targets length does not match input");
  }
  for (Token t : term.targets) {
    if (t >= k) throw ValidationError("target outside content vocabulary");
  }
}

double masked_nll(const MatrixXd& logits, const TrainingTerm& term, MatrixXd* dlogits,
                  const PredictionGrid* probs, std::size_t* positions) {
  double loss = 0.0;
  for (std::size_t i = 0; i < term.targets.size(); ++i) {
    const Token t = term.targets[i];
    if (t < 0) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const double peak = logits.row(r).maxCoeff();
    const double lse = peak + std::log((logits.row(r).array() - peak).exp().sum());
    loss += term.weight * (lse - logits(r, t));
    if (dlogits) {
      dlogits->row(r) = term.weight * probs->row(r);
      (*dlogits)(r, t) -= term.weight;
    }
    if (positions) ++*positions;
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  return loss;
}

}  // namespace

double term_loss(const TinyTransformer& model, const TrainingTerm& term) {
  check_targets(term, model.vocab_size());
  if (!term.has_targets()) return 0.0;
  const ForwardResult fr = model.forward(term.input);
  return masked_nll(fr.logits, term, nullptr, nullptr, nullptr);
}

LossGradients loss_gradients(const TinyTransformer& model, std::span<const TrainingTerm> terms) {
  LossGradients out;
  out.grads = model.params().zeros_like();
  for (const TrainingTerm& term : terms) {
    check_targets(term, model.vocab_size());
    if (!term.has_targets()) continue;
    const ForwardResult fr = model.forward(term.input);
    MatrixXd dlogits = MatrixXd::Zero(fr.logits.rows(), fr.logits.cols());
    out.loss += masked_nll(fr.logits, term, &dlogits, &fr.probs, &out.loss_positions);
    accumulate(out.grads, model.backward(fr.cache, dlogits));
  }
  return out;
}

void accumulate(Gradients& dst, const Gradients& src, double scale) {
  if (dst.size() != src.size()) throw ValidationError("gradient set size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].rows() != src[i].rows() || dst[i].cols() != src[i].cols()) {
      throw ValidationError("gradient tensor shape mismatch");
    }
    if (scale == 1.0) {
      dst[i] += src[i];
    } else {
      dst[i] += scale * src[i];
    }
  }
}

}  // namespace maskdiff
