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
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "partialmine/core.hpp"
#include "partialmine/error.hpp"

namespace partialmine {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A scalar loss and its gradient w.r.t. the probabilities it was computed
/// from.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

// ---------------------------------------------------------------------------
// Weighted partial-label binary cross entropy
// ---------------------------------------------------------------------------

/// -(1/C) * mean_i sum_c alpha_c [beta_c 1[y=1] log p + 1[y=0] log(1-p)].
/// Unknown cells contribute exactly zero value and zero gradient.
inline LossValue partial_bce(const Matrix& p, const LabelGrid& y, const TaskWeightTable& weights) {
  const auto B = static_cast<std::size_t>(p.rows());
  const auto C = static_cast<std::size_t>(p.cols());
  if (y.rows() != B || y.cols() != C || weights.alpha.size() != C || weights.beta.size() != C)
    throw Error(ErrorCode::kShapeMismatch, "partial_bce: probabilities, labels and weights disagree");
  LossValue out{0.0, Matrix::Zero(p.rows(), p.cols())};
  if (B == 0) return out;
  const double scale = 1.0 / (static_cast<double>(C) * static_cast<double>(B));
  double sum = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < C; ++c) {
      const auto k = static_cast<Eigen::Index>(c);
      const double pc = p(r, k);
      switch (y(i, c)) {
        case LabelValue::kPresent: {
          const double w = weights.alpha[c] * weights.beta[c];
          sum += w * std::log(pc);
          out.grad(r, k) = -scale * w / pc;
          break;
        }
        case LabelValue::kAbsent: {
          const double w = weights.alpha[c];
          sum += w * std::log(1.0 - pc);
          out.grad(r, k) = scale * w / (1.0 - pc);
          break;
        }
        case LabelValue::kUnknown: break;
      }
    }
  }
  out.value = -scale * sum;
  return out;
}

// ---------------------------------------------------------------------------
// Adversarial objectives
// ---------------------------------------------------------------------------

/// Discriminator outputs for one sub-game over a batch that mixes domains.
struct GameScores {
  CategoryId category = 0;
  Vector probs;  // D(f) per row
};

/// min_G max_D V. Both players are written as losses to be minimised, so
/// generator_loss + discriminator_loss = 0 on identical outputs.
struct AdversarialLoss {
  double value = 0.0;               // V, ascended by the discriminators
  double generator_loss = 0.0;      // V
  double discriminator_loss = 0.0;  // -V
  std::vector<Vector> grad;         // dV/d(probs), per game
};

namespace detail {

inline std::pair<double, Vector> adversarial_game(const Vector& probs, const std::vector<bool>& is_internal) {
  if (static_cast<std::size_t>(probs.size()) != is_internal.size())
    throw Error(ErrorCode::kShapeMismatch, "adversarial game: scores and domain indicator disagree");
  std::size_t n_int = 0;
  for (bool b : is_internal) n_int += b ? 1 : 0;
  const std::size_t n_ext = is_internal.size() - n_int;
  if (n_int == 0 || n_ext == 0)
    throw Error(ErrorCode::kShapeMismatch, "adversarial game needs samples from both domains");
  double sum_int = 0.0, sum_ext = 0.0;
  Vector grad(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double d = probs(i);
    if (is_internal[static_cast<std::size_t>(i)]) {
      sum_int += std::log(d);
      grad(i) = 1.0 / (static_cast<double>(n_int) * d);
    } else {
      sum_ext += std::log(1.0 - d);
      grad(i) = -1.0 / (static_cast<double>(n_ext) * (1.0 - d));
    }
  }
  return {sum_int / static_cast<double>(n_int) + sum_ext / static_cast<double>(n_ext), std::move(grad)};
}

}  // namespace detail

/// Category-specific sub-games summed over the common categories:
/// sum_c mean_int log D_c(f_c) + mean_ext log(1 - D_c(f_c)).
inline AdversarialLoss tat_loss(const std::vector<GameScores>& games, const std::vector<bool>& is_internal) {
  if (games.empty()) throw Error(ErrorCode::kNoCommonCategories, "no common categories to play");
  AdversarialLoss out;
  for (const auto& g : games) {
    auto [value, grad] = detail::adversarial_game(g.probs, is_internal);
    out.value += value;
    out.grad.push_back(std::move(grad));
  }
  out.generator_loss = out.value;
  out.discriminator_loss = -out.value;
  return out;
}

/// The same game with a single discriminator on the undivided feature.
inline AdversarialLoss holistic_adv_loss(const Vector& probs, const std::vector<bool>& is_internal) {
  auto [value, grad] = detail::adversarial_game(probs, is_internal);
  AdversarialLoss out;
  out.value = value;
  out.generator_loss = value;
  out.discriminator_loss = -value;
  out.grad.push_back(std::move(grad));
  return out;
}

// ---------------------------------------------------------------------------
// Temporal ensemble
// ---------------------------------------------------------------------------

/// Stable row index for sample ids.
class SampleIndex {
 public:
  SampleIndex() = default;
  explicit SampleIndex(std::vector<std::string> ids) : ids_(std::move(ids)) {
    pos_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (!pos_.emplace(ids_[i], i).second)
        throw Error(ErrorCode::kInvalidLabelMatrix, "duplicate sample id '" + ids_[i] + "'");
  }

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::size_t find(const std::string& id) const {
    auto it = pos_.find(id);
    if (it == pos_.end()) throw Error(ErrorCode::kUnknownSampleId, "'" + id + "'");
    return it->second;
  }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> pos_;
};

struct EpochPredictions;

/// Running ensemble Z_t over (sample, category), epoch counter t and
/// momentum gamma. Z_1 = 0.
class EmaBuffer {
 public:
  EmaBuffer() = default;
  EmaBuffer(std::vector<std::string> ids, std::size_t categories, double gamma)
      : index_(std::make_shared<const SampleIndex>(std::move(ids))), gamma_(gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::kInvalidConfig, "gamma must lie in [0, 1)");
    values_ = Matrix::Zero(static_cast<Eigen::Index>(index_->size()), static_cast<Eigen::Index>(categories));
    target_ = values_;
  }

  int epoch() const noexcept { return epoch_; }
  double gamma() const noexcept { return gamma_; }
  const Matrix& values() const noexcept { return values_; }
  const Matrix& target() const noexcept { return target_; }  // Z_t / (1 - gamma^(t-1))
  const SampleIndex& index() const { return *index_; }
  std::size_t samples() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t categories() const noexcept { return static_cast<std::size_t>(values_.cols()); }

 private:
  friend EmaBuffer ema_update(const EmaBuffer&, const EpochPredictions&);
  friend EmaBuffer restore_ema_buffer(std::vector<std::string>, double, int, Matrix);

  std::shared_ptr<const SampleIndex> index_;
  Matrix values_;
  Matrix target_;
  int epoch_ = 1;
  double gamma_ = 0.9;
};

/// Predictions collected during one epoch, aligned with a buffer's rows.
/// Rows never recorded keep their previous ensemble value at update time.
struct EpochPredictions {
  int epoch = 1;
  Matrix values;
  std::vector<std::uint8_t> seen;

  EpochPredictions() = default;
  EpochPredictions(const EmaBuffer& buffer, int epoch_)
      : epoch(epoch_),
        values(Matrix::Zero(static_cast<Eigen::Index>(buffer.samples()), static_cast<Eigen::Index>(buffer.categories()))),
        seen(buffer.samples(), 0) {}

  template <typename Row>
  void record(std::size_t row, const Row& p) {
    values.row(static_cast<Eigen::Index>(row)) = p;
    seen[row] = 1;
  }

  template <typename Row>
  void record(const EmaBuffer& buffer, const std::string& id, const Row& p) {
    record(buffer.index().find(id), p);
  }

  std::size_t seen_count() const {
    std::size_t n = 0;
    for (auto s : seen) n += s;
    return n;
  }
};

/// Z_t = gamma Z_{t-1} + (1 - gamma) p_{t-1} for every recorded row.
inline EmaBuffer ema_update(const EmaBuffer& buffer, const EpochPredictions& predictions) {
  if (predictions.epoch != buffer.epoch_)
    throw Error(ErrorCode::kEpochMismatch, "buffer at epoch " + std::to_string(buffer.epoch_) +
                                               ", predictions from epoch " + std::to_string(predictions.epoch));
  if (predictions.values.rows() != buffer.values_.rows() || predictions.values.cols() != buffer.values_.cols())
    throw Error(ErrorCode::kShapeMismatch, "predictions do not cover the buffer");
  EmaBuffer next = buffer;
  const double g = buffer.gamma_;
  // The corrected target is kept as a running mean, z += w (p - z), so a
  // constant prediction leaves it exactly unchanged.
  const double before = 1.0 - std::pow(g, static_cast<double>(buffer.epoch_ - 1));
  const double after = 1.0 - std::pow(g, static_cast<double>(buffer.epoch_));
  const double w = (1.0 - g) / after;
  for (Eigen::Index i = 0; i < next.values_.rows(); ++i) {
    if (!predictions.seen[static_cast<std::size_t>(i)]) {
      if (before > 0.0) next.target_.row(i) *= before / after;
      continue;
    }
    for (Eigen::Index c = 0; c < next.values_.cols(); ++c) {
      next.values_(i, c) = g * buffer.values_(i, c) + (1.0 - g) * predictions.values(i, c);
      if (w == 1.0)
        next.target_(i, c) = predictions.values(i, c);
      else
        next.target_(i, c) += w * (predictions.values(i, c) - buffer.target_(i, c));
    }
  }
  ++next.epoch_;
  return next;
}

inline EmaBuffer restore_ema_buffer(std::vector<std::string> ids, double gamma, int epoch, Matrix values) {
  EmaBuffer b(std::move(ids), static_cast<std::size_t>(values.cols()), gamma);
  if (values.rows() != static_cast<Eigen::Index>(b.samples()))
    throw Error(ErrorCode::kShapeMismatch, "ema buffer rows");
  b.values_ = std::move(values);
  b.epoch_ = epoch;
  const double correction = 1.0 - std::pow(gamma, static_cast<double>(epoch - 1));
  b.target_ = correction > 0.0 ? Matrix(b.values_ / correction) : b.values_;
  return b;
}

/// Bias-corrected target z_t = Z_t / (1 - gamma^(t-1)); needs t >= 2.
inline Matrix ema_target(const EmaBuffer& buffer) {
  if (buffer.epoch() < 2) throw Error(ErrorCode::kNoHistory, "ensemble target needs at least one past epoch");
  return buffer.target();
}

// ---------------------------------------------------------------------------
// Uncertainty-gated temporal-ensemble loss
// ---------------------------------------------------------------------------

struct UteLoss {
  double value = 0.0;
  Matrix grad;  // w.r.t. p only; z is a constant target
  std::size_t included = 0;
  std::size_t unknown = 0;
  double gated_fraction = 0.0;
};

/// Sum of (p - z)^2 over unknown cells whose confidence |0.5 - p| >= H,
/// divided by the number of unknown cells. Gated cells count in the
/// denominator, so H = 0 gives the plain ensemble loss and a high H scales
/// the term down rather than concentrating it on a few cells.
/// `rows` optionally restricts which rows take part (empty = all).
inline UteLoss ute_loss(const Matrix& p, const Matrix& z, const LabelGrid& y, double threshold,
                        const std::vector<std::uint8_t>& rows = {}) {
  if (!(threshold >= 0.0 && threshold <= 0.5))
    throw Error(ErrorCode::kBadThreshold, "H = " + std::to_string(threshold) + " outside [0, 0.5]");
  if (p.rows() != z.rows() || p.cols() != z.cols() || y.rows() != static_cast<std::size_t>(p.rows()) ||
      y.cols() != static_cast<std::size_t>(p.cols()) || (!rows.empty() && rows.size() != y.rows()))
    throw Error(ErrorCode::kShapeMismatch, "ute_loss: shapes disagree");
  UteLoss out;
  out.grad = Matrix::Zero(p.rows(), p.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!rows.empty() && !rows[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (y(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) != LabelValue::kUnknown) continue;
      ++out.unknown;
      if (std::abs(0.5 - p(i, c)) < threshold) continue;
      ++out.included;
      const double d = p(i, c) - z(i, c);
      sum += d * d;
      out.grad(i, c) = 2.0 * d;
    }
  }
  if (out.included > 0) {
    const double inv = 1.0 / static_cast<double>(out.unknown);
    out.value = sum * inv;
    out.grad *= inv;
  }
  out.gated_fraction = out.unknown ? static_cast<double>(out.included) / static_cast<double>(out.unknown) : 0.0;
  return out;
}

/// Hard pseudo-labels: unknown cells with |0.5 - z| >= H become round(z).
inline LabelGrid hard_pseudo_labels(const LabelGrid& y, const Matrix& z, double threshold,
                                    const std::vector<std::uint8_t>& rows = {}) {
  LabelGrid out = y;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    if (!rows.empty() && !rows[i]) continue;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      if (y(i, c) != LabelValue::kUnknown) continue;
      const double v = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      if (std::abs(0.5 - v) < threshold) continue;
      out(i, c) = v >= 0.5 ? LabelValue::kPresent : LabelValue::kAbsent;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composite
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double cls = 0.0;
  double tat_generator = 0.0;
  double tat_discriminator = 0.0;
  double ute = 0.0;
  double total = 0.0;
  double gated_fraction = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

/// total = cls + lambda_tat * tat_generator + lambda_ute * ute.
inline LossBreakdown total_loss(double cls, double tat_generator, double ute, double lambda_tat, double lambda_ute) {
  LossBreakdown b;
  b.cls = cls;
  b.tat_generator = tat_generator;
  b.ute = ute;
  b.total = cls + lambda_tat * tat_generator + lambda_ute * ute;
  return b;
}

}  // namespace partialmine
