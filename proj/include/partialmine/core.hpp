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
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "partialmine/error.hpp"

namespace partialmine {

using CategoryId = int;
using DomainId = int;
using CategorySet = std::set<CategoryId>;

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Per-cell label. The integer values are the on-disk codes.
enum class LabelValue : std::int8_t {
  kAbsent = 0,
  kPresent = 1,
  kUnknown = -2,
};

constexpr int label_code(LabelValue v) noexcept { return static_cast<int>(v); }

/// Parses an integer label code; anything other than 1, 0, -2 is rejected.
inline LabelValue parse_label(int code) {
  switch (code) {
    case 1: return LabelValue::kPresent;
    case 0: return LabelValue::kAbsent;
    case -2: return LabelValue::kUnknown;
    default:
      throw Error(ErrorCode::kBadLabelCode, "label code " + std::to_string(code));
  }
}

/// Dense row-major rows x cols grid of labels. Used both for whole label
/// matrices and for mini-batches.
class LabelGrid {
 public:
  LabelGrid() = default;
  LabelGrid(std::size_t rows, std::size_t cols, LabelValue fill = LabelValue::kUnknown)
      : rows_(rows), cols_(cols), cells_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  LabelValue operator()(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }
  LabelValue& operator()(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }

  bool operator==(const LabelGrid&) const = default;

  /// Gathers the listed rows, in order.
  LabelGrid select_rows(const std::vector<std::size_t>& rows) const {
    LabelGrid out(rows.size(), cols_);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols_), cols_,
                  out.cells_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
    return out;
  }

  /// Stacks two grids with the same column count.
  static LabelGrid vstack(const LabelGrid& top, const LabelGrid& bottom) {
    if (top.cols_ != bottom.cols_ && top.rows_ != 0 && bottom.rows_ != 0)
      throw Error(ErrorCode::kShapeMismatch, "vstack of label grids with different widths");
    LabelGrid out(top.rows_ + bottom.rows_, top.rows_ ? top.cols_ : bottom.cols_);
    std::copy(top.cells_.begin(), top.cells_.end(), out.cells_.begin());
    std::copy(bottom.cells_.begin(), bottom.cells_.end(),
              out.cells_.begin() + static_cast<std::ptrdiff_t>(top.cells_.size()));
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<LabelValue> cells_;
};

// ---------------------------------------------------------------------------
// Domains and category partition
// ---------------------------------------------------------------------------

struct DomainInfo {
  DomainId id = 0;
  std::string name;
  CategorySet label_space;

  bool operator==(const DomainInfo&) const = default;
};

/// Ordered set of domains over a global category space [0, num_categories).
/// Ids are assigned densely in registration order.
class DomainRegistry {
 public:
  explicit DomainRegistry(int num_categories = 0) : num_categories_(num_categories) {}

  DomainId add(std::string name, CategorySet label_space) {
    if (label_space.empty())
      throw Error(ErrorCode::kInvalidRegistry, "domain '" + name + "' has an empty label space");
    for (CategoryId c : label_space)
      if (c < 0 || c >= num_categories_)
        throw Error(ErrorCode::kInvalidRegistry,
                    "category " + std::to_string(c) + " outside [0, " +
                        std::to_string(num_categories_) + ")");
    const auto id = static_cast<DomainId>(domains_.size());
    domains_.push_back({id, std::move(name), std::move(label_space)});
    return id;
  }

  int num_categories() const noexcept { return num_categories_; }
  std::size_t size() const noexcept { return domains_.size(); }
  bool empty() const noexcept { return domains_.empty(); }
  const std::vector<DomainInfo>& domains() const noexcept { return domains_; }

  const DomainInfo& at(DomainId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= domains_.size())
      throw Error(ErrorCode::kInvalidRegistry, "unknown domain id " + std::to_string(id));
    return domains_[static_cast<std::size_t>(id)];
  }

  bool operator==(const DomainRegistry&) const = default;

 private:
  int num_categories_;
  std::vector<DomainInfo> domains_;
};

struct CategoryPartition {
  CategorySet common;
  std::map<DomainId, CategorySet> exclusive;

  bool is_common(CategoryId c) const { return common.contains(c); }
  bool operator==(const CategoryPartition&) const = default;
};

/// Splits the union of label spaces into the categories every domain labels
/// and, per domain, the categories only it (among the non-common ones) labels.
inline CategoryPartition category_partition(const DomainRegistry& registry) {
  if (registry.empty()) throw Error(ErrorCode::kEmptyRegistry, "no domains registered");
  CategoryPartition out;
  out.common = registry.domains().front().label_space;
  for (const auto& d : registry.domains()) {
    CategorySet kept;
    std::set_intersection(out.common.begin(), out.common.end(), d.label_space.begin(),
                          d.label_space.end(), std::inserter(kept, kept.end()));
    out.common = std::move(kept);
  }
  for (const auto& d : registry.domains()) {
    CategorySet rest;
    std::set_difference(d.label_space.begin(), d.label_space.end(), out.common.begin(),
                        out.common.end(), std::inserter(rest, rest.end()));
    out.exclusive.emplace(d.id, std::move(rest));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label matrix
// ---------------------------------------------------------------------------

/// n x C labels plus the per-row sample id and source domain.
class PartialLabelMatrix {
 public:
  PartialLabelMatrix() = default;

  PartialLabelMatrix(LabelGrid labels, std::vector<std::string> sample_ids,
                     std::vector<DomainId> domain_of)
      : labels_(std::move(labels)), sample_ids_(std::move(sample_ids)),
        domain_of_(std::move(domain_of)) {
    if (sample_ids_.size() != labels_.rows() || domain_of_.size() != labels_.rows())
      throw Error(ErrorCode::kInvalidLabelMatrix, "row count disagreement");
    std::unordered_set<std::string> seen;
    seen.reserve(sample_ids_.size());
    for (const auto& id : sample_ids_)
      if (!seen.insert(id).second)
        throw Error(ErrorCode::kInvalidLabelMatrix, "duplicate sample id '" + id + "'");
  }

  std::size_t samples() const noexcept { return labels_.rows(); }
  std::size_t categories() const noexcept { return labels_.cols(); }
  LabelValue operator()(std::size_t r, std::size_t c) const { return labels_(r, c); }

  const LabelGrid& labels() const noexcept { return labels_; }
  const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }
  const std::vector<DomainId>& domain_of() const noexcept { return domain_of_; }

  bool operator==(const PartialLabelMatrix&) const = default;

 private:
  LabelGrid labels_;
  std::vector<std::string> sample_ids_;
  std::vector<DomainId> domain_of_;
};

struct LabelViolation {
  std::size_t sample = 0;
  CategoryId category = 0;
  bool operator==(const LabelViolation&) const = default;
};

/// Lists every cell that carries a known label outside its domain's label
/// space. An empty result means the matrix is consistent with the registry.
inline std::vector<LabelViolation> validate_label_matrix(const PartialLabelMatrix& matrix,
                                                         const DomainRegistry& registry) {
  std::vector<LabelViolation> out;
  for (std::size_t i = 0; i < matrix.samples(); ++i) {
    const auto& space = registry.at(matrix.domain_of()[i]).label_space;
    for (std::size_t c = 0; c < matrix.categories(); ++c) {
      const auto cat = static_cast<CategoryId>(c);
      if (matrix(i, c) != LabelValue::kUnknown && !space.contains(cat))
        out.push_back({i, cat});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Task weights
// ---------------------------------------------------------------------------

struct LabelCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t unknown = 0;
};

inline std::vector<LabelCounts> count_labels(const LabelGrid& labels) {
  std::vector<LabelCounts> out(labels.cols());
  for (std::size_t i = 0; i < labels.rows(); ++i)
    for (std::size_t c = 0; c < labels.cols(); ++c) {
      switch (labels(i, c)) {
        case LabelValue::kPresent: ++out[c].positives; break;
        case LabelValue::kAbsent: ++out[c].negatives; break;
        case LabelValue::kUnknown: ++out[c].unknown; break;
      }
    }
  return out;
}

/// beta_c = N_c / P_c over known labels. Throws DegenerateCategory when a
/// category lacks positives or negatives.
inline std::vector<double> class_balance_weights(const LabelGrid& labels) {
  const auto counts = count_labels(labels);
  std::vector<double> beta(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c].positives == 0 || counts[c].negatives == 0)
      throw Error(ErrorCode::kDegenerateCategory,
                  "category " + std::to_string(c) + " has " +
                      std::to_string(counts[c].positives) + " positives and " +
                      std::to_string(counts[c].negatives) + " negatives");
    beta[c] = static_cast<double>(counts[c].negatives) / static_cast<double>(counts[c].positives);
  }
  return beta;
}

inline std::vector<double> class_balance_weights(const PartialLabelMatrix& matrix) {
  return class_balance_weights(matrix.labels());
}

struct TaskWeightTable {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t size() const noexcept { return alpha.size(); }
  bool operator==(const TaskWeightTable&) const = default;
};

/// Categories outside `scope` (when given) carry no labels in the run; they
/// get beta = 1 instead of raising DegenerateCategory.
inline TaskWeightTable task_weight_table(const CategoryPartition& partition,
                                         const PartialLabelMatrix& matrix, double alpha_common,
                                         double alpha_other, const CategorySet* scope = nullptr) {
  TaskWeightTable table;
  if (scope) {
    const auto counts = count_labels(matrix.labels());
    table.beta.assign(counts.size(), 1.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (!scope->contains(static_cast<CategoryId>(c))) continue;
      if (counts[c].positives == 0 || counts[c].negatives == 0)
        throw Error(ErrorCode::kDegenerateCategory,
                    "category " + std::to_string(c) + " has " + std::to_string(counts[c].positives) +
                        " positives and " + std::to_string(counts[c].negatives) + " negatives");
      table.beta[c] = static_cast<double>(counts[c].negatives) / static_cast<double>(counts[c].positives);
    }
  } else {
    table.beta = class_balance_weights(matrix);
  }
  table.alpha.resize(table.beta.size());
  for (std::size_t c = 0; c < table.alpha.size(); ++c)
    table.alpha[c] = partition.is_common(static_cast<CategoryId>(c)) ? alpha_common : alpha_other;
  return table;
}

/// Concatenates label matrices row-wise (e.g. pooling the training splits of
/// all domains before computing beta).
inline PartialLabelMatrix concat(const std::vector<const PartialLabelMatrix*>& parts) {
  std::size_t cols = 0;
  LabelGrid grid;
  std::vector<std::string> ids;
  std::vector<DomainId> domains;
  for (const auto* p : parts) {
    if (p->samples() == 0) continue;
    if (cols == 0) cols = p->categories();
    grid = LabelGrid::vstack(grid.rows() ? grid : LabelGrid(0, cols), p->labels());
    ids.insert(ids.end(), p->sample_ids().begin(), p->sample_ids().end());
    domains.insert(domains.end(), p->domain_of().begin(), p->domain_of().end());
  }
  return PartialLabelMatrix(std::move(grid), std::move(ids), std::move(domains));
}

}  // namespace partialmine
