// Copyright 2026 The PartialMine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "partialmine/error.hpp"
#include "partialmine/nn/model.hpp"

namespace partialmine::nn {

namespace detail {

template <typename Block>
std::vector<Matrix*> tensors_of(Block& block) {
  std::vector<Matrix*> out;
  for_each_tensor(block, [&](const std::string&, Matrix& t) { out.push_back(&t); });
  return out;
}

template <typename Block>
std::vector<const Matrix*> tensors_of(const Block& block) {
  std::vector<const Matrix*> out;
  for_each_tensor(block, [&](const std::string&, const Matrix& t) { out.push_back(&t); });
  return out;
}

inline void check_congruent(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                            const std::vector<Matrix>& slots, const char* who) {
  if (params.size() != grads.size() || params.size() != slots.size())
    throw Error(ErrorCode::kShapeMismatch, std::string(who) + ": tensor count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols() ||
        params[i]->rows() != slots[i].rows() || params[i]->cols() != slots[i].cols())
      throw Error(ErrorCode::kShapeMismatch, std::string(who) + ": tensor " + std::to_string(i));
}

template <typename Block>
std::vector<Matrix> zero_slots(const Block& block) {
  std::vector<Matrix> out;
  for_each_tensor(block, [&](const std::string&, const Matrix& t) { out.push_back(Matrix::Zero(t.rows(), t.cols())); });
  return out;
}

}  // namespace detail

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
};

template <typename Block>
AdamState make_adam_state(const Block& block) {
  AdamState s;
  s.first = detail::zero_slots(block);
  s.second = detail::zero_slots(block);
  return s;
}

/// One bias-corrected Adam descent step.
template <typename Block>
void adam_step(Block& params, AdamState& state, const Block& grads, double lr) {
  auto p = detail::tensors_of(params);
  const auto g = detail::tensors_of(grads);
  detail::check_congruent(p, g, state.first, "adam");
  detail::check_congruent(p, g, state.second, "adam");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto m = state.first[i].array();
    auto v = state.second[i].array();
    const auto gi = g[i]->array();
    m = b1 * m + (1.0 - b1) * gi;
    v = b2 * v + (1.0 - b2) * gi * gi;
    p[i]->array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

struct RmsPropState {
  double decay = 0.99;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> square;
};

template <typename Block>
RmsPropState make_rmsprop_state(const Block& block) {
  RmsPropState s;
  s.square = detail::zero_slots(block);
  return s;
}

/// theta -= lr * g / (sqrt(v) + eps), v the running mean of g^2.
template <typename Block>
void rmsprop_step(Block& params, RmsPropState& state, const Block& grads, double lr) {
  auto p = detail::tensors_of(params);
  const auto g = detail::tensors_of(grads);
  detail::check_congruent(p, g, state.square, "rmsprop");
  ++state.step;
  const double a = state.decay, eps = state.epsilon;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto v = state.square[i].array();
    const auto gi = g[i]->array();
    v = a * v + (1.0 - a) * gi * gi;
    p[i]->array() -= lr * gi / (v.sqrt() + eps);
  }
}

/// Adam for the generator block, RMSprop for the discriminators.
struct OptimizerState {
  AdamState adam;
  RmsPropState rmsprop;
};

inline OptimizerState make_optimizer_state(const ModelParams& params) {
  return {make_adam_state(params.generator), make_rmsprop_state(params.discriminators)};
}

}  // namespace partialmine::nn
