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

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "partialmine/error.hpp"
#include "partialmine/nn/model.hpp"
#include "partialmine/nn/optim.hpp"

namespace partialmine::nn {

using nlohmann::json;

inline json tensor_to_json(const Matrix& t) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(data)}};
}

inline Matrix tensor_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw Error(ErrorCode::kSchemaMismatch, "tensor data length");
  Matrix t(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) t(i, j2) = data[k++];
  return t;
}

inline json architecture_to_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"trunk_widths", a.trunk_widths},
          {"projection_dim", a.projection_dim},
          {"num_categories", a.num_categories},
          {"head_mode", a.head_mode == HeadMode::kPerTask ? "per_task" : "holistic"},
          {"adversary", a.adversary == AdversaryMode::kNone      ? "none"
                        : a.adversary == AdversaryMode::kPerTask ? "per_task"
                                                                 : "holistic"},
          {"common", a.common},
          {"discriminator_widths", a.discriminator_widths},
          {"leaky_slope", a.leaky_slope}};
}

inline Architecture architecture_from_json(const json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.trunk_widths = j.at("trunk_widths").get<std::vector<int>>();
  a.projection_dim = j.at("projection_dim").get<int>();
  a.num_categories = j.at("num_categories").get<int>();
  const auto head = j.at("head_mode").get<std::string>();
  if (head != "per_task" && head != "holistic") throw Error(ErrorCode::kSchemaMismatch, "head_mode " + head);
  a.head_mode = head == "per_task" ? HeadMode::kPerTask : HeadMode::kHolistic;
  const auto adv = j.at("adversary").get<std::string>();
  if (adv == "none") a.adversary = AdversaryMode::kNone;
  else if (adv == "per_task") a.adversary = AdversaryMode::kPerTask;
  else if (adv == "holistic") a.adversary = AdversaryMode::kHolistic;
  else throw Error(ErrorCode::kSchemaMismatch, "adversary " + adv);
  a.common = j.at("common").get<CategorySet>();
  a.discriminator_widths = j.at("discriminator_widths").get<std::vector<int>>();
  a.leaky_slope = j.at("leaky_slope").get<double>();
  return a;
}

/// {"architecture": ..., "tensors": {path: tensor}}.
inline json params_to_json(const ModelParams& p) {
  json tensors = json::object();
  for_each_tensor(p, [&](const std::string& path, const Matrix& t) { tensors[path] = tensor_to_json(t); });
  return {{"architecture", architecture_to_json(p.arch)}, {"tensors", std::move(tensors)}};
}

/// Rebuilds the layout from the architecture and fills every tensor.
inline ModelParams params_from_json(const json& j) {
  Rng scratch(0);
  ModelParams p = init_model(architecture_from_json(j.at("architecture")), scratch);
  const auto& tensors = j.at("tensors");
  for_each_tensor(p, [&](const std::string& path, Matrix& t) {
    if (!tensors.contains(path)) throw Error(ErrorCode::kSchemaMismatch, "missing tensor " + path);
    Matrix v = tensor_from_json(tensors.at(path));
    if (v.rows() != t.rows() || v.cols() != t.cols()) throw Error(ErrorCode::kSchemaMismatch, "tensor shape " + path);
    t = std::move(v);
  });
  return p;
}

inline json slots_to_json(const std::vector<Matrix>& slots) {
  json out = json::array();
  for (const auto& s : slots) out.push_back(tensor_to_json(s));
  return out;
}

inline std::vector<Matrix> slots_from_json(const json& j) {
  std::vector<Matrix> out;
  for (const auto& s : j) out.push_back(tensor_from_json(s));
  return out;
}

inline json optimizer_to_json(const OptimizerState& s) {
  return {{"adam",
           {{"beta1", s.adam.beta1},
            {"beta2", s.adam.beta2},
            {"epsilon", s.adam.epsilon},
            {"step", s.adam.step},
            {"first", slots_to_json(s.adam.first)},
            {"second", slots_to_json(s.adam.second)}}},
          {"rmsprop",
           {{"decay", s.rmsprop.decay},
            {"epsilon", s.rmsprop.epsilon},
            {"step", s.rmsprop.step},
            {"square", slots_to_json(s.rmsprop.square)}}}};
}

inline OptimizerState optimizer_from_json(const json& j) {
  OptimizerState s;
  const auto& a = j.at("adam");
  s.adam.beta1 = a.at("beta1").get<double>();
  s.adam.beta2 = a.at("beta2").get<double>();
  s.adam.epsilon = a.at("epsilon").get<double>();
  s.adam.step = a.at("step").get<std::int64_t>();
  s.adam.first = slots_from_json(a.at("first"));
  s.adam.second = slots_from_json(a.at("second"));
  const auto& r = j.at("rmsprop");
  s.rmsprop.decay = r.at("decay").get<double>();
  s.rmsprop.epsilon = r.at("epsilon").get<double>();
  s.rmsprop.step = r.at("step").get<std::int64_t>();
  s.rmsprop.square = slots_from_json(r.at("square"));
  return s;
}

}  // namespace partialmine::nn
