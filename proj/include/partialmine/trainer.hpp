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
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "partialmine/core.hpp"
#include "partialmine/datagen.hpp"
#include "partialmine/error.hpp"
#include "partialmine/losses.hpp"
#include "partialmine/metrics.hpp"
#include "partialmine/nn/model.hpp"
#include "partialmine/nn/optim.hpp"
#include "partialmine/nn/serialize.hpp"
#include "partialmine/rng.hpp"

namespace partialmine {

enum class UteScope { kAllUnknown, kExternalSamplesOnly };
enum class HShape { kLinear, kConstant };

/// Which components take part in training (the ablation grid).
struct AblationSwitches {
  bool tw = true;
  bool tat = true;
  bool ute = true;
  bool uncertainty_gate = true;
  bool hat_instead_of_tat = false;
  bool hard_label_instead_of_ute = false;
  bool single_domain = false;  // train on the internal domain alone

  bool operator==(const AblationSwitches&) const = default;
};

struct HSchedule {
  HShape shape = HShape::kLinear;
  double start = 0.4;
  double end = 0.0;
};

struct TrainConfig {
  int epochs = 8;
  std::size_t batch_size = 32;
  double generator_lr = 1e-4;
  std::vector<int> lr_decay_after = {3, 6};  // epochs, for runs of >= 7 epochs
  double lr_decay_factor = 0.1;
  double discriminator_lr = 1e-4;
  double lambda_tat = 0.03;
  double lambda_ute = 30.0;
  double gamma = 0.9;
  double alpha_common = 3.0;
  double alpha_other = 1.0;
  HSchedule h;
  std::size_t validation_interval = 0;  // in steps; 0 validates at every epoch end
  std::uint64_t seed = 0;
  AblationSwitches switches;
  UteScope ute_scope = UteScope::kAllUnknown;

  std::vector<int> trunk_widths{64, 64};
  int projection_dim = 16;
  std::vector<int> discriminator_widths{};
  double leaky_slope = 0.2;

  void validate() const {
    if (epochs < 1) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
    if (lambda_tat < 0.0 || lambda_ute < 0.0) throw Error(ErrorCode::kInvalidConfig, "lambdas must be >= 0");
    if (!(h.start >= h.end && h.end >= 0.0 && h.start <= 0.5))
      throw Error(ErrorCode::kInvalidConfig, "need 0.5 >= H_0 >= H_end >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::kInvalidConfig, "gamma must lie in [0, 1)");
  }
};

/// Confidence threshold for epoch t: linear from `start` at t = 2 (the first
/// epoch with an ensemble) to `end` at the final epoch.
inline double h_schedule(int epoch, const TrainConfig& config) {
  const auto& h = config.h;
  if (h.shape == HShape::kConstant || epoch < 2) return h.start;
  const int last = config.epochs;
  if (last <= 2) return h.end;
  if (epoch >= last) return h.end;
  if (epoch == 2) return h.start;
  return h.end + (h.start - h.end) * static_cast<double>(last - epoch) / static_cast<double>(last - 2);
}

/// Generator learning rate during `epoch` (1-based). The decay epochs are
/// taken as printed for runs of at least 7 epochs and scaled by epochs/8
/// for shorter ones.
inline double generator_lr_at(int epoch, const TrainConfig& config) {
  double lr = config.generator_lr;
  for (int boundary : config.lr_decay_after) {
    int b = boundary;
    if (config.epochs < 7) b = std::max(1, static_cast<int>(std::lround(boundary * config.epochs / 8.0)));
    if (epoch > b) lr *= config.lr_decay_factor;
  }
  return lr;
}

inline nn::Architecture architecture_for(const TrainConfig& config, int input_dim, int num_categories,
                                         const CategoryPartition& partition, bool adversarial) {
  nn::Architecture a;
  a.input_dim = input_dim;
  a.num_categories = num_categories;
  a.trunk_widths = config.trunk_widths;
  a.projection_dim = config.projection_dim;
  a.discriminator_widths = config.discriminator_widths;
  a.leaky_slope = config.leaky_slope;
  a.common = partition.common;
  const bool hat = config.switches.hat_instead_of_tat;
  a.head_mode = hat ? nn::HeadMode::kHolistic : nn::HeadMode::kPerTask;
  a.adversary = !adversarial ? nn::AdversaryMode::kNone
                : hat        ? nn::AdversaryMode::kHolistic
                             : nn::AdversaryMode::kPerTask;
  return a;
}

// ---------------------------------------------------------------------------
// One step's inputs
// ---------------------------------------------------------------------------

struct Batch {
  DomainId domain = 0;
  Matrix features;
  LabelGrid labels;
  std::vector<std::size_t> buffer_rows;  // rows in the EMA buffer
};

inline Batch make_batch(const Dataset& data, DomainId domain, const std::vector<std::size_t>& rows,
                        std::size_t buffer_offset) {
  Batch b;
  b.domain = domain;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    b.features.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
  b.labels = data.labels.labels().select_rows(rows);
  b.buffer_rows.reserve(rows.size());
  for (auto r : rows) b.buffer_rows.push_back(buffer_offset + r);
  return b;
}

/// Everything besides the parameters that the composite objective depends on.
struct ObjectiveContext {
  const TaskWeightTable* weights = nullptr;
  double lambda_tat = 0.0;
  double lambda_ute = 0.0;
  bool adversarial = false;
  bool ute = false;         // soft temporal-ensemble term
  bool hard_labels = false; // pseudo-labels through the classification loss
  double threshold = 0.0;
  UteScope scope = UteScope::kAllUnknown;
  const Matrix* target_internal = nullptr;  // z rows for the batches, when ute/hard_labels
  const Matrix* target_external = nullptr;
};

namespace detail {

inline Matrix vstack(const Matrix& a, const Matrix* b) {
  if (!b) return a;
  Matrix out(a.rows() + b->rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b->rows()) = *b;
  return out;
}

inline std::vector<bool> domain_indicator(Eigen::Index internal, Eigen::Index external) {
  std::vector<bool> v(static_cast<std::size_t>(internal + external), false);
  std::fill_n(v.begin(), internal, true);
  return v;
}

}  // namespace detail

/// Result of evaluating the discriminators' objective on detached features.
struct DiscriminatorEval {
  double objective = 0.0;  // maximised
  nn::Gradients grads;     // gradient of -objective; generator block is zero
};

/// Discriminator objective with features treated as constants.
inline DiscriminatorEval evaluate_discriminators(const nn::ModelParams& params, const nn::ForwardPass& internal,
                                                 const nn::ForwardPass& external) {
  DiscriminatorEval out{0.0, nn::zero_gradients(params)};
  const auto indicator = detail::domain_indicator(internal.batch(), external.batch());
  auto& nets = out.grads.discriminators.nets;
  if (params.arch.adversary == nn::AdversaryMode::kHolistic) {
    const Matrix f = detail::vstack(internal.trunk_feature(), &external.trunk_feature());
    auto pass = nn::discriminate_holistic(params, f);
    const auto loss = holistic_adv_loss(pass.probs, indicator);
    out.objective = loss.value;
    nets[pass.index].net = nn::discriminator_backward(params, pass, -loss.grad[0]).grads;
    return out;
  }
  std::vector<GameScores> games;
  std::vector<nn::DiscriminatorPass> passes;
  for (CategoryId c : params.arch.common) {
    const auto cc = static_cast<std::size_t>(c);
    passes.push_back(nn::discriminate(params, detail::vstack(internal.features[cc], &external.features[cc]), c));
    games.push_back({c, passes.back().probs});
  }
  const auto loss = tat_loss(games, indicator);
  out.objective = loss.value;
  for (std::size_t g = 0; g < passes.size(); ++g)
    nets[passes[g].index].net = nn::discriminator_backward(params, passes[g], -loss.grad[g]).grads;
  return out;
}

struct GeneratorEval {
  LossBreakdown loss;
  nn::Gradients grads;  // discriminator block is zero
};

/// The composite generator objective cls + lambda_tat * tat_gen + lambda_ute * ute
/// and its exact gradient w.r.t. the generator parameters.
inline GeneratorEval evaluate_generator(const nn::ModelParams& params, const Batch& internal, const Batch* external,
                                        const ObjectiveContext& ctx, const nn::ForwardPass& fi,
                                        const nn::ForwardPass* fe) {
  const Eigen::Index ni = fi.batch();
  const Eigen::Index ne = fe ? fe->batch() : 0;
  const Matrix p = detail::vstack(fi.probs, fe ? &fe->probs : nullptr);
  const LabelGrid y = external ? LabelGrid::vstack(internal.labels, external->labels) : internal.labels;

  std::vector<std::uint8_t> rows;
  if (ctx.scope == UteScope::kExternalSamplesOnly) {
    rows.assign(static_cast<std::size_t>(ni + ne), 0);
    std::fill(rows.begin() + ni, rows.end(), std::uint8_t{1});
  }
  Matrix z;
  if (ctx.ute || ctx.hard_labels) z = detail::vstack(*ctx.target_internal, external ? ctx.target_external : nullptr);

  LabelGrid cls_labels = ctx.hard_labels ? hard_pseudo_labels(y, z, ctx.threshold, rows) : y;
  const LossValue cls = partial_bce(p, cls_labels, *ctx.weights);
  Matrix dp = cls.grad;

  double ute_value = 0.0;
  double gated = 0.0;
  if (ctx.ute) {
    const UteLoss u = ute_loss(p, z, y, ctx.threshold, rows);
    ute_value = u.value;
    gated = u.gated_fraction;
    dp += ctx.lambda_ute * u.grad;
  }

  nn::GeneratorSeeds si, se;
  si.dprobs = dp.topRows(ni);
  if (fe) se.dprobs = dp.bottomRows(ne);

  double tat_gen = 0.0;
  double tat_disc = 0.0;
  if (ctx.adversarial && fe) {
    const auto indicator = detail::domain_indicator(ni, ne);
    if (params.arch.adversary == nn::AdversaryMode::kHolistic) {
      const Matrix f = detail::vstack(fi.trunk_feature(), &fe->trunk_feature());
      auto pass = nn::discriminate_holistic(params, f);
      const auto loss = holistic_adv_loss(pass.probs, indicator);
      tat_gen = loss.generator_loss;
      tat_disc = loss.discriminator_loss;
      const Matrix df = nn::discriminator_backward(params, pass, ctx.lambda_tat * loss.grad[0]).dinput;
      si.dtrunk_feature = df.topRows(ni);
      se.dtrunk_feature = df.bottomRows(ne);
    } else {
      std::vector<GameScores> games;
      std::vector<nn::DiscriminatorPass> passes;
      for (CategoryId c : params.arch.common) {
        const auto cc = static_cast<std::size_t>(c);
        passes.push_back(nn::discriminate(params, detail::vstack(fi.features[cc], &fe->features[cc]), c));
        games.push_back({c, passes.back().probs});
      }
      const auto loss = tat_loss(games, indicator);
      tat_gen = loss.generator_loss;
      tat_disc = loss.discriminator_loss;
      const auto C = static_cast<std::size_t>(params.arch.num_categories);
      si.dfeatures.resize(C);
      se.dfeatures.resize(C);
      for (std::size_t g = 0; g < passes.size(); ++g) {
        const auto cc = static_cast<std::size_t>(games[g].category);
        const Matrix df = nn::discriminator_backward(params, passes[g], ctx.lambda_tat * loss.grad[g]).dinput;
        si.dfeatures[cc] = df.topRows(ni);
        se.dfeatures[cc] = df.bottomRows(ne);
      }
    }
  }

  GeneratorEval out;
  out.loss = total_loss(cls.value, tat_gen, ute_value, ctx.adversarial ? ctx.lambda_tat : 0.0,
                        ctx.ute ? ctx.lambda_ute : 0.0);
  out.loss.tat_discriminator = tat_disc;
  out.loss.gated_fraction = gated;
  out.grads = nn::backward(params, fi, si);
  if (fe) nn::accumulate(out.grads.generator, nn::backward(params, *fe, se).generator);
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;
  int epoch = 0;
  double threshold = 0.0;
  LossBreakdown loss;
};

struct ValidationRecord {
  std::size_t step = 0;
  int epoch = 0;
  MetricsReport report;
};

struct History {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
};

/// Best-validation snapshot.
struct Checkpoint {
  nn::ModelParams params;
  nn::OptimizerState optimizer;
  std::string rng_state;
  std::size_t step = 0;
  int epoch = 0;
  MetricsReport validation;
  DomainRegistry registry;
  TrainConfig config;
};

/// Predicts probabilities for every row of `features` in fixed-size chunks.
inline Matrix predict(const nn::ModelParams& params, const Matrix& features) {
  Matrix out(features.rows(), params.arch.num_categories);
  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index start = 0; start < features.rows(); start += kChunk) {
    const auto n = std::min(kChunk, features.rows() - start);
    out.middleRows(start, n) = nn::forward(params, features.middleRows(start, n)).probs;
  }
  return out;
}

/// AUC report of a model on one split (known labels only).
inline MetricsReport evaluate(const nn::ModelParams& params, const Dataset& data, const CategoryPartition& partition,
                              DomainId internal_domain = 0) {
  if (data.size() == 0) throw Error(ErrorCode::kInsufficientData, "evaluation split is empty");
  return metrics_report(predict(params, data.features), data.labels.labels(), partition, internal_domain);
}

/// Owns the model, both optimizers and the temporal ensemble of one run.
/// Domain 0 is the internal dataset; domain 1 (if present) the external one.
class Trainer {
 public:
  Trainer(TrainConfig config, const DomainRegistry& registry, std::vector<const Dataset*> train)
      : config_(std::move(config)), registry_(registry), partition_(category_partition(registry)),
        train_(std::move(train)), shuffle_rng_(derive_seed(config_.seed, 1)) {
    config_.validate();
    if (train_.empty()) throw Error(ErrorCode::kInsufficientData, "no training data");
    if (config_.switches.single_domain) train_.resize(1);
    if (train_.size() > 2) throw Error(ErrorCode::kInvalidConfig, "at most two training domains are supported");
    for (std::size_t d = 0; d < train_.size(); ++d)
      if (train_[d]->size() < config_.batch_size)
        throw Error(ErrorCode::kInsufficientData, "domain " + std::to_string(d) + " has " +
                                                      std::to_string(train_[d]->size()) + " samples, batch is " +
                                                      std::to_string(config_.batch_size));

    std::vector<const PartialLabelMatrix*> pooled;
    std::vector<std::string> ids;
    for (const auto* ds : train_) {
      pooled.push_back(&ds->labels);
      offsets_.push_back(ids.size());
      ids.insert(ids.end(), ds->labels.sample_ids().begin(), ds->labels.sample_ids().end());
    }
    CategorySet scope;
    for (std::size_t d = 0; d < train_.size(); ++d) {
      const auto& space = registry_.domains()[d].label_space;
      scope.insert(space.begin(), space.end());
    }
    const double a_common = config_.switches.tw ? config_.alpha_common : config_.alpha_other;
    weights_ = task_weight_table(partition_, concat(pooled), a_common, config_.alpha_other, &scope);

    const auto& sw = config_.switches;
    adversarial_ = sw.tat && two_domains();
    if (adversarial_ && !sw.hat_instead_of_tat && partition_.common.empty())
      throw Error(ErrorCode::kNoCommonCategories, "task-specific adversarial training needs common categories");

    Rng init_rng(derive_seed(config_.seed, 0));
    params_ = nn::init_model(architecture_for(config_, static_cast<int>(train_[0]->features.cols()),
                                              registry_.num_categories(), partition_, adversarial_),
                             init_rng);
    optimizer_ = nn::make_optimizer_state(params_);
    ema_ = EmaBuffer(ids, static_cast<std::size_t>(registry_.num_categories()), config_.gamma);
    predictions_ = EpochPredictions(ema_, 1);
  }

  const TrainConfig& config() const noexcept { return config_; }
  const CategoryPartition& partition() const noexcept { return partition_; }
  const TaskWeightTable& weights() const noexcept { return weights_; }
  const nn::ModelParams& params() const noexcept { return params_; }
  const nn::OptimizerState& optimizer() const noexcept { return optimizer_; }
  const EmaBuffer& ema() const noexcept { return ema_; }
  const EpochPredictions& epoch_predictions() const noexcept { return predictions_; }
  const std::vector<std::size_t>& buffer_offsets() const noexcept { return offsets_; }
  bool adversarial() const noexcept { return adversarial_; }
  bool two_domains() const noexcept { return train_.size() >= 2; }
  int epoch() const noexcept { return epoch_; }
  std::size_t global_step() const noexcept { return step_; }
  const Rng& shuffle_rng() const noexcept { return shuffle_rng_; }

  /// Whether the temporal-ensemble machinery is active this epoch.
  bool ensemble_active() const {
    return config_.switches.ute && two_domains() && ema_.epoch() >= 2;
  }

  double threshold() const {
    return config_.switches.uncertainty_gate ? h_schedule(epoch_, config_) : 0.0;
  }

  Batch batch(DomainId domain, const std::vector<std::size_t>& rows) const {
    const auto d = static_cast<std::size_t>(domain);
    return make_batch(*train_.at(d), domain, rows, offsets_.at(d));
  }

  /// Ascends the discriminator objective on detached features. Returns the
  /// objective before the update. Generator parameters are not touched.
  double discriminator_update(const nn::ForwardPass& internal, const nn::ForwardPass& external) {
    DiscriminatorEval eval = evaluate_discriminators(params_, internal, external);
    nn::rmsprop_step(params_.discriminators, optimizer_.rmsprop, eval.grads.discriminators, config_.discriminator_lr);
    return eval.objective;
  }

  ObjectiveContext context(const Batch& internal, const Batch* external, Matrix& zi, Matrix& ze) const {
    ObjectiveContext ctx;
    ctx.weights = &weights_;
    ctx.lambda_tat = config_.lambda_tat;
    ctx.lambda_ute = config_.lambda_ute;
    ctx.adversarial = adversarial_ && external;
    const bool ens = ensemble_active() && external;
    ctx.hard_labels = ens && config_.switches.hard_label_instead_of_ute;
    ctx.ute = ens && !ctx.hard_labels;
    ctx.threshold = threshold();
    ctx.scope = config_.ute_scope;
    if (ens) {
      zi = gather_targets(internal);
      ze = gather_targets(*external);
      ctx.target_internal = &zi;
      ctx.target_external = &ze;
    }
    return ctx;
  }

  /// Descends the composite objective w.r.t. the generator. The
  /// discriminators and their optimizer state are not touched.
  LossBreakdown generator_update(const Batch& internal, const Batch* external, const nn::ForwardPass& fi,
                                 const nn::ForwardPass* fe) {
    Matrix zi, ze;
    const ObjectiveContext ctx = context(internal, external, zi, ze);
    GeneratorEval eval = evaluate_generator(params_, internal, external, ctx, fi, fe);
    if (!std::isfinite(eval.loss.total))
      throw Error(ErrorCode::kNumericalFailure, "non-finite loss at step " + std::to_string(step_));
    nn::adam_step(params_.generator, optimizer_.adam, eval.grads.generator, generator_lr_at(epoch_, config_));
    return eval.loss;
  }

  /// Discriminator update (when adversarial), then generator update, then
  /// records this step's predictions for the epoch-end ensemble update.
  LossBreakdown train_step(const Batch& internal, const Batch* external) {
    const nn::ForwardPass fi = nn::forward(params_, internal.features);
    std::optional<nn::ForwardPass> fe;
    if (external) fe = nn::forward(params_, external->features);
    if (adversarial_ && fe) discriminator_update(fi, *fe);
    LossBreakdown loss = generator_update(internal, external, fi, fe ? &*fe : nullptr);
    record(internal, fi.probs);
    if (external) record(*external, fe->probs);
    ++step_;
    return loss;
  }

  /// Folds this epoch's predictions into the ensemble and advances the epoch.
  void end_epoch() {
    ema_ = ema_update(ema_, predictions_);
    targets_.reset();
    ++epoch_;
    predictions_ = EpochPredictions(ema_, ema_.epoch());
  }

  /// Per-domain shuffled batches for one epoch; steps = min_d floor(n_d / B).
  std::vector<std::vector<std::vector<std::size_t>>> epoch_plan() {
    const std::size_t B = config_.batch_size;
    std::size_t steps = std::numeric_limits<std::size_t>::max();
    for (const auto* ds : train_) steps = std::min(steps, ds->size() / B);
    std::vector<std::vector<std::vector<std::size_t>>> plan(train_.size());
    for (std::size_t d = 0; d < train_.size(); ++d) {
      std::vector<std::size_t> perm(train_[d]->size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      shuffle_rng_.shuffle(perm.begin(), perm.end());
      for (std::size_t s = 0; s < steps; ++s)
        plan[d].emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s * B),
                             perm.begin() + static_cast<std::ptrdiff_t>((s + 1) * B));
    }
    return plan;
  }

  Checkpoint snapshot(const MetricsReport& report) const {
    return {params_, optimizer_, shuffle_rng_.state(), step_, epoch_, report, registry_, config_};
  }

 private:
  Matrix gather_targets(const Batch& b) const {
    if (!targets_) targets_ = ema_target(ema_);
    Matrix z(static_cast<Eigen::Index>(b.buffer_rows.size()), targets_->cols());
    for (std::size_t i = 0; i < b.buffer_rows.size(); ++i)
      z.row(static_cast<Eigen::Index>(i)) = targets_->row(static_cast<Eigen::Index>(b.buffer_rows[i]));
    return z;
  }

  void record(const Batch& b, const Matrix& probs) {
    for (std::size_t i = 0; i < b.buffer_rows.size(); ++i)
      predictions_.record(b.buffer_rows[i], probs.row(static_cast<Eigen::Index>(i)));
  }

  TrainConfig config_;
  DomainRegistry registry_;
  CategoryPartition partition_;
  std::vector<const Dataset*> train_;
  std::vector<std::size_t> offsets_;
  TaskWeightTable weights_;
  bool adversarial_ = false;
  nn::ModelParams params_;
  nn::OptimizerState optimizer_;
  EmaBuffer ema_;
  EpochPredictions predictions_;
  mutable std::optional<Matrix> targets_;
  Rng shuffle_rng_;
  int epoch_ = 1;
  std::size_t step_ = 0;
};

struct TrainingResult {
  Checkpoint best;
  History history;
};

/// Validation mean AUC used for selection; runs without a defined mean rank last.
inline double selection_score(const MetricsReport& r) {
  return r.mean ? *r.mean : -std::numeric_limits<double>::infinity();
}

/// Full training loop over domain 0 (internal) and, unless single-domain,
/// domain 1 (external). Validation uses `data[0].val`; the checkpoint with the
/// highest validation mean AUC wins (earliest on ties).
inline TrainingResult run_training(const TrainConfig& config, const DomainRegistry& registry,
                                   const std::vector<DomainData>& data) {
  if (data.empty() || data.size() != registry.size())
    throw Error(ErrorCode::kInsufficientData, "one DomainData per registered domain is required");
  std::vector<const Dataset*> train;
  for (const auto& d : data) train.push_back(&d.train);
  Trainer trainer(config, registry, train);
  const Dataset& val = data[0].val;
  const bool external = trainer.two_domains();

  TrainingResult result;
  std::optional<double> best_score;
  auto validate = [&]() {
    ValidationRecord rec{trainer.global_step(), trainer.epoch(), evaluate(trainer.params(), val, trainer.partition())};
    const double score = selection_score(rec.report);
    if (!best_score || score > *best_score) {
      best_score = score;
      result.best = trainer.snapshot(rec.report);
    }
    result.history.validations.push_back(std::move(rec));
  };

  for (int e = 1; e <= config.epochs; ++e) {
    const auto plan = trainer.epoch_plan();
    const double threshold = trainer.threshold();
    for (std::size_t s = 0; s < plan[0].size(); ++s) {
      const Batch bi = trainer.batch(0, plan[0][s]);
      std::optional<Batch> be;
      if (external) be = trainer.batch(1, plan[1][s]);
      const int epoch = trainer.epoch();
      const LossBreakdown loss = trainer.train_step(bi, be ? &*be : nullptr);
      result.history.steps.push_back({trainer.global_step(), epoch, threshold, loss});
      if (config.validation_interval > 0 && trainer.global_step() % config.validation_interval == 0) validate();
    }
    if (config.validation_interval == 0) validate();
    trainer.end_epoch();
  }
  if (!best_score) validate();
  return result;
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  const auto& s = c.switches;
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"generator_lr", c.generator_lr},
          {"lr_decay_after", c.lr_decay_after},
          {"lr_decay_factor", c.lr_decay_factor},
          {"discriminator_lr", c.discriminator_lr},
          {"lambda_tat", c.lambda_tat},
          {"lambda_ute", c.lambda_ute},
          {"gamma", c.gamma},
          {"alpha_common", c.alpha_common},
          {"alpha_other", c.alpha_other},
          {"h_schedule",
           {{"shape", c.h.shape == HShape::kLinear ? "linear" : "constant"}, {"start", c.h.start}, {"end", c.h.end}}},
          {"validation_interval", c.validation_interval},
          {"seed", c.seed},
          {"switches",
           {{"tw", s.tw},
            {"tat", s.tat},
            {"ute", s.ute},
            {"uncertainty_gate", s.uncertainty_gate},
            {"hat_instead_of_tat", s.hat_instead_of_tat},
            {"hard_label_instead_of_ute", s.hard_label_instead_of_ute},
            {"single_domain", s.single_domain}}},
          {"ute_scope", c.ute_scope == UteScope::kAllUnknown ? "all_unknown" : "external_samples_only"},
          {"trunk_widths", c.trunk_widths},
          {"projection_dim", c.projection_dim},
          {"discriminator_widths", c.discriminator_widths},
          {"leaky_slope", c.leaky_slope}};
}

/// Missing keys keep their defaults, so a config file only lists overrides.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.generator_lr = j.value("generator_lr", c.generator_lr);
    c.lr_decay_after = j.value("lr_decay_after", c.lr_decay_after);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.discriminator_lr = j.value("discriminator_lr", c.discriminator_lr);
    c.lambda_tat = j.value("lambda_tat", c.lambda_tat);
    c.lambda_ute = j.value("lambda_ute", c.lambda_ute);
    c.gamma = j.value("gamma", c.gamma);
    c.alpha_common = j.value("alpha_common", c.alpha_common);
    c.alpha_other = j.value("alpha_other", c.alpha_other);
    if (j.contains("h_schedule")) {
      const auto& h = j.at("h_schedule");
      const auto shape = h.value("shape", std::string(c.h.shape == HShape::kLinear ? "linear" : "constant"));
      if (shape != "linear" && shape != "constant") throw Error(ErrorCode::kInvalidConfig, "h_schedule.shape " + shape);
      c.h.shape = shape == "linear" ? HShape::kLinear : HShape::kConstant;
      c.h.start = h.value("start", c.h.start);
      c.h.end = h.value("end", c.h.end);
    }
    c.validation_interval = j.value("validation_interval", c.validation_interval);
    c.seed = j.value("seed", c.seed);
    if (j.contains("switches")) {
      const auto& s = j.at("switches");
      auto& w = c.switches;
      w.tw = s.value("tw", w.tw);
      w.tat = s.value("tat", w.tat);
      w.ute = s.value("ute", w.ute);
      w.uncertainty_gate = s.value("uncertainty_gate", w.uncertainty_gate);
      w.hat_instead_of_tat = s.value("hat_instead_of_tat", w.hat_instead_of_tat);
      w.hard_label_instead_of_ute = s.value("hard_label_instead_of_ute", w.hard_label_instead_of_ute);
      w.single_domain = s.value("single_domain", w.single_domain);
    }
    if (j.contains("ute_scope")) {
      const auto scope = j.at("ute_scope").get<std::string>();
      if (scope == "all_unknown") c.ute_scope = UteScope::kAllUnknown;
      else if (scope == "external_samples_only") c.ute_scope = UteScope::kExternalSamplesOnly;
      else throw Error(ErrorCode::kInvalidConfig, "ute_scope " + scope);
    }
    c.trunk_widths = j.value("trunk_widths", c.trunk_widths);
    c.projection_dim = j.value("projection_dim", c.projection_dim);
    c.discriminator_widths = j.value("discriminator_widths", c.discriminator_widths);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json registry_to_json(const DomainRegistry& r) {
  nlohmann::json domains = nlohmann::json::array();
  for (const auto& d : r.domains()) domains.push_back({{"id", d.id}, {"name", d.name}, {"label_space", d.label_space}});
  return {{"num_categories", r.num_categories()}, {"domains", std::move(domains)}};
}

inline DomainRegistry registry_from_json(const nlohmann::json& j) {
  DomainRegistry r(j.at("num_categories").get<int>());
  for (const auto& d : j.at("domains")) r.add(d.at("name").get<std::string>(), d.at("label_space").get<CategorySet>());
  return r;
}

inline constexpr const char* kCheckpointSchema = "partialmine.checkpoint/1";

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  return {{"schema", kCheckpointSchema},
          {"model", nn::params_to_json(c.params)},
          {"optimizer", nn::optimizer_to_json(c.optimizer)},
          {"rng_state", c.rng_state},
          {"step", c.step},
          {"epoch", c.epoch},
          {"validation", metrics_to_json(c.validation)},
          {"registry", registry_to_json(c.registry)},
          {"config", train_config_to_json(c.config)}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", std::string()) != kCheckpointSchema)
      throw Error(ErrorCode::kSchemaMismatch, "checkpoint schema tag");
    Checkpoint c;
    c.params = nn::params_from_json(j.at("model"));
    c.optimizer = nn::optimizer_from_json(j.at("optimizer"));
    c.rng_state = j.at("rng_state").get<std::string>();
    c.step = j.at("step").get<std::size_t>();
    c.epoch = j.at("epoch").get<int>();
    c.validation = metrics_from_json(j.at("validation"));
    c.registry = registry_from_json(j.at("registry"));
    c.config = train_config_from_json(j.at("config"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("checkpoint: ") + e.what());
  }
}

/// step,epoch,cls,tat_gen,tat_disc,ute,total,gated_fraction,H
inline std::string history_csv(const History& h) {
  std::string out = "step,epoch,cls,tat_gen,tat_disc,ute,total,gated_fraction,H\n";
  for (const auto& s : h.steps) {
    out += std::to_string(s.step) + "," + std::to_string(s.epoch);
    for (double v : {s.loss.cls, s.loss.tat_generator, s.loss.tat_discriminator, s.loss.ute, s.loss.total,
                     s.loss.gated_fraction, s.threshold}) {
      out += ',';
      detail::append_shortest(out, v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace partialmine
