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

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <limits>

#include "maskdiff/conversation.hpp"

namespace maskdiff::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// tanh approximation of GELU
template <std::floating_point Scalar>
Scalar gelu(Scalar u) {
  constexpr Scalar kC = Scalar(0.7978845608028654);  // sqrt(2 / pi)
  constexpr Scalar kA = Scalar(0.044715);
  return Scalar(0.5) * u * (Scalar(1) + std::tanh(kC * (u + kA * u * u * u)));
}

template <std::floating_point Scalar>
Scalar gelu_grad(Scalar u) {
  constexpr Scalar kC = Scalar(0.7978845608028654);
  constexpr Scalar kA = Scalar(0.044715);
  const Scalar th = std::tanh(kC * (u + kA * u * u * u));
  return Scalar(0.5) * (Scalar(1) + th) +
         Scalar(0.5) * u * (Scalar(1) - th * th) * kC *
             (Scalar(1) + Scalar(3) * kA * u * u);
}

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

template <typename Derived>
auto gelu_grad(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu_grad(v); });
}

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;  // (x - mean) * rstd
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd;
};

/// Row-wise layer normalization y = gain * xhat + bias.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x,
                          const RowVector<Scalar>& gain,
                          const RowVector<Scalar>& bias, Scalar eps,
                          LayerNormCache<Scalar>& cache) {
  const auto cols = static_cast<Scalar>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / cols;
    const auto centered = (x.row(r).array() - mean).matrix();
    const Scalar var = centered.squaredNorm() / cols;
    cache.rstd[r] = Scalar(1) / std::sqrt(var + eps);
    cache.normalized.row(r) = centered * cache.rstd[r];
  }
  return (cache.normalized.array().rowwise() * gain.array()).rowwise() +
         bias.array();
}

/// Accumulates dgain/dbias and returns dx.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy,
                                   const RowVector<Scalar>& gain,
                                   const LayerNormCache<Scalar>& cache,
                                   Matrix<Scalar>& dgain, Matrix<Scalar>& dbias) {
  dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Matrix<Scalar> dxhat = (dy.array().rowwise() * gain.array()).matrix();
  const auto cols = static_cast<Scalar>(dy.cols());
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Scalar mean_d = dxhat.row(r).sum() / cols;
    const Scalar mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / cols;
    dx.row(r) = cache.rstd[r] *
                (dxhat.row(r).array() - mean_d -
                 cache.normalized.row(r).array() * mean_dx)
                    .matrix();
  }
  return dx;
}

/// Row softmax; entries with mask(q, k) == false get exactly zero weight.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> masked_softmax(const Eigen::MatrixBase<Derived>& scores,
                              const AttentionMatrix& mask) {
  Matrix<Scalar> out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (mask(r, c)) peak = std::max(peak, scores(r, c));
    }
    Scalar total = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      out(r, c) = mask(r, c) ? std::exp(scores(r, c) - peak) : Scalar(0);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Backward of row softmax: dz = p * (dp - rowsum(dp * p)).
template <typename Scalar>
Matrix<Scalar> softmax_backward(const Matrix<Scalar>& probs,
                                const Matrix<Scalar>& dprobs) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner =
      (dprobs.array() * probs.array()).rowwise().sum();
  return (probs.array() * (dprobs.array().colwise() - inner.array())).matrix();
}

}  // namespace maskdiff::nn
