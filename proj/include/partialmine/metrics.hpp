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
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "partialmine/core.hpp"
#include "partialmine/error.hpp"

namespace partialmine {

/// Area under the ROC curve, Mann-Whitney form with tie-averaged ranks:
/// (sum of positive ranks - P(P+1)/2) / (P N). Labels are 0/1.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share their average
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw Error(ErrorCode::kDegenerateLabels, "auc needs at least one positive and one negative");
  const double P = static_cast<double>(positives);
  return (positive_rank_sum - P * (P + 1.0) / 2.0) / (P * static_cast<double>(negatives));
}

struct CategoryMetrics {
  std::optional<double> auc;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct MetricsReport {
  std::vector<CategoryMetrics> per_category;
  std::optional<double> mean;
  std::optional<double> mean_common;
  std::optional<double> mean_internal_only;

  bool operator==(const MetricsReport& o) const {
    if (per_category.size() != o.per_category.size()) return false;
    for (std::size_t c = 0; c < per_category.size(); ++c)
      if (per_category[c].auc != o.per_category[c].auc || per_category[c].positives != o.per_category[c].positives ||
          per_category[c].negatives != o.per_category[c].negatives)
        return false;
    return mean == o.mean && mean_common == o.mean_common && mean_internal_only == o.mean_internal_only;
  }
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<CategoryMetrics>& cats, const auto& include) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cats.size(); ++c)
    if (cats[c].auc && include(static_cast<CategoryId>(c))) {
      sum += *cats[c].auc;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace detail

/// Per-category AUC over known labels, plus the mean over all scored
/// categories, over the common ones and over the internal domain's
/// exclusive ones. Categories lacking positives or negatives are absent.
inline MetricsReport metrics_report(const Eigen::MatrixXd& probs, const LabelGrid& labels,
                                    const CategoryPartition& partition, DomainId internal_domain) {
  if (static_cast<std::size_t>(probs.rows()) != labels.rows() || static_cast<std::size_t>(probs.cols()) != labels.cols())
    throw Error(ErrorCode::kShapeMismatch, "metrics_report: predictions and labels disagree");
  MetricsReport report;
  report.per_category.resize(labels.cols());
  std::vector<double> scores;
  std::vector<int> y;
  for (std::size_t c = 0; c < labels.cols(); ++c) {
    scores.clear();
    y.clear();
    auto& m = report.per_category[c];
    for (std::size_t i = 0; i < labels.rows(); ++i) {
      const auto v = labels(i, c);
      if (v == LabelValue::kUnknown) continue;
      scores.push_back(probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
      y.push_back(v == LabelValue::kPresent ? 1 : 0);
      (v == LabelValue::kPresent ? m.positives : m.negatives)++;
    }
    if (m.positives > 0 && m.negatives > 0) m.auc = auc(scores, y);
  }
  static const CategorySet kNone;
  const auto it = partition.exclusive.find(internal_domain);
  const CategorySet& internal_only = it == partition.exclusive.end() ? kNone : it->second;
  report.mean = detail::mean_of(report.per_category, [](CategoryId) { return true; });
  report.mean_common = detail::mean_of(report.per_category, [&](CategoryId c) { return partition.is_common(c); });
  report.mean_internal_only =
      detail::mean_of(report.per_category, [&](CategoryId c) { return internal_only.contains(c); });
  return report;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json cats = json::array();
  for (std::size_t c = 0; c < r.per_category.size(); ++c)
    cats.push_back({{"auc", opt(r.per_category[c].auc)},
                    {"category", c},
                    {"negatives", r.per_category[c].negatives},
                    {"positives", r.per_category[c].positives}});
  return {{"mean", opt(r.mean)},
          {"mean_common", opt(r.mean_common)},
          {"mean_internal_only", opt(r.mean_internal_only)},
          {"per_category", std::move(cats)}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::optional<double>{} : v.get<double>(); };
  MetricsReport r;
  for (const auto& c : j.at("per_category"))
    r.per_category.push_back({opt(c.at("auc")), c.at("positives").get<std::size_t>(), c.at("negatives").get<std::size_t>()});
  r.mean = opt(j.at("mean"));
  r.mean_common = opt(j.at("mean_common"));
  r.mean_internal_only = opt(j.at("mean_internal_only"));
  return r;
}

}  // namespace partialmine
