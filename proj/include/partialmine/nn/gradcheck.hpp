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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "partialmine/error.hpp"
#include "partialmine/nn/model.hpp"

namespace partialmine::nn {

/// A scalar objective over all parameters together with its claimed
/// analytic gradient.
struct Objective {
  std::function<double(const ModelParams&)> value;
  std::function<Gradients(const ModelParams&)> gradient;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_path;  // "<tensor path>[row,col]"
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is ~0 from reporting pure roundoff as error.
inline constexpr double kGradCheckFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / scale;
}

/// Compares objective.gradient against central differences for every
/// parameter entry of the tensors accepted by `include` (all by default).
inline GradCheckReport compare_gradients(const ModelParams& params, const Objective& objective, double eps,
                                         const std::function<bool(const std::string&)>& include = {}) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw Error(ErrorCode::kInvalidConfig, "eps must lie in [1e-7, 1e-3]");
  const Gradients analytic = objective.gradient(params);
  std::vector<const Matrix*> grads;
  for_each_tensor(analytic, [&](const std::string&, const Matrix& t) { grads.push_back(&t); });

  ModelParams probe = params;
  GradCheckReport report;
  std::size_t index = 0;
  for_each_tensor(probe, [&](const std::string& path, Matrix& t) {
    const Matrix& g = *grads.at(index++);
    if (g.rows() != t.rows() || g.cols() != t.cols())
      throw Error(ErrorCode::kShapeMismatch, "gradient shape at " + path);
    if (include && !include(path)) return;
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const double saved = t(i, j);
        t(i, j) = saved + eps;
        const double up = objective.value(probe);
        t(i, j) = saved - eps;
        const double down = objective.value(probe);
        t(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = relative_error(g(i, j), numeric);
        ++report.checked;
        if (report.worst_path.empty() || err > report.max_relative_error) {
          report.max_relative_error = err;
          report.worst_path = path + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
          report.analytic = g(i, j);
          report.numeric = numeric;
        }
      }
  });
  return report;
}

/// Builds a model and an objective from `seed` and checks the objective's
/// gradient.
inline GradCheckReport grad_check(const std::function<ModelParams(std::uint64_t)>& build_model,
                                  const std::function<Objective(const ModelParams&, std::uint64_t)>& build_loss,
                                  std::uint64_t seed, double eps) {
  const ModelParams params = build_model(seed);
  return compare_gradients(params, build_loss(params, seed), eps);
}

/// Worse of two reports.
inline GradCheckReport worst_of(const GradCheckReport& a, const GradCheckReport& b) {
  GradCheckReport out = a.max_relative_error >= b.max_relative_error ? a : b;
  out.checked = a.checked + b.checked;
  return out;
}

}  // namespace partialmine::nn
