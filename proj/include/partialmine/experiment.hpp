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
#include <atomic>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "partialmine/datagen.hpp"
#include "partialmine/error.hpp"
#include "partialmine/losses.hpp"
#include "partialmine/metrics.hpp"
#include "partialmine/nn/gradcheck.hpp"
#include "partialmine/nn/model.hpp"
#include "partialmine/nn/optim.hpp"
#include "partialmine/rng.hpp"
#include "partialmine/trainer.hpp"

namespace partialmine {

/// Component switches of a named ablation variant. Column letters refer to
/// the ablation grid: joint (a), tw (b), tw+tat (c), tw+te (d, TAT plus an
/// ungated ensemble), tw+ute (e), full-tw (f), full (g), hat (h),
/// hard_label (i); "single" trains on the internal domain only.
inline AblationSwitches variant_switches(std::string_view name) {
  AblationSwitches s;
  s.tw = s.tat = s.ute = s.uncertainty_gate = false;
  if (name == "single") {
    s.single_domain = true;
  } else if (name == "joint") {
  } else if (name == "tw") {
    s.tw = true;
  } else if (name == "tw+tat") {
    s.tw = s.tat = true;
  } else if (name == "tw+te") {
    s.tw = s.tat = s.ute = true;
  } else if (name == "tw+ute") {
    s.tw = s.ute = s.uncertainty_gate = true;
  } else if (name == "full") {
    s.tw = s.tat = s.ute = s.uncertainty_gate = true;
  } else if (name == "full-tw") {
    s.tat = s.ute = s.uncertainty_gate = true;
  } else if (name == "hat") {
    s.tw = s.tat = s.hat_instead_of_tat = s.ute = s.uncertainty_gate = true;
  } else if (name == "hard_label") {
    s.tw = s.tat = s.ute = s.hard_label_instead_of_ute = s.uncertainty_gate = true;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown variant '" + std::string(name) + "'");
  }
  return s;
}

inline const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v = {"single", "joint", "tw", "tw+tat", "tw+te",
                                             "tw+ute", "full", "full-tw", "hat", "hard_label"};
  return v;
}

enum class SweepParameter { kNone, kLambdaTat, kLambdaUte };

inline std::vector<double> default_sweep_values(SweepParameter p) {
  switch (p) {
    case SweepParameter::kLambdaTat: return {0.003, 0.01, 0.03, 0.1, 0.3};
    case SweepParameter::kLambdaUte: return {3.0, 10.0, 30.0, 100.0, 300.0};
    case SweepParameter::kNone: return {};
  }
  return {};
}

struct AblationPlan {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  nlohmann::json benchmark = {{"preset", "default"}};
  nlohmann::json train = nlohmann::json::object();  // TrainConfig overrides
  SweepParameter sweep = SweepParameter::kNone;
  std::vector<double> sweep_values;
  std::string output;
};

inline AblationPlan plan_from_json(const nlohmann::json& j) {
  try {
    AblationPlan p;
    p.variants = j.value("variants", std::vector<std::string>{});
    for (const auto& v : p.variants) (void)variant_switches(v);
    p.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    if (j.contains("benchmark")) p.benchmark = j.at("benchmark");
    if (j.contains("train")) p.train = j.at("train");
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      const auto name = s.is_string() ? s.get<std::string>() : s.at("parameter").get<std::string>();
      if (name == "lambda_tat") p.sweep = SweepParameter::kLambdaTat;
      else if (name == "lambda_ute") p.sweep = SweepParameter::kLambdaUte;
      else if (name != "none") throw Error(ErrorCode::kInvalidConfig, "unknown sweep parameter " + name);
      p.sweep_values = s.is_object() && s.contains("values") ? s.at("values").get<std::vector<double>>()
                                                             : default_sweep_values(p.sweep);
    }
    p.output = j.value("output", std::string());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("ablation plan: ") + e.what());
  }
}

/// Benchmark instance for one run: the plan's benchmark with its seed
/// replaced by the run seed.
inline BenchmarkConfig benchmark_for_seed(const nlohmann::json& benchmark, std::uint64_t seed) {
  nlohmann::json j = benchmark;
  j["seed"] = seed;
  return benchmark_from_json(j);
}

struct RunSpec {
  std::string variant;
  std::uint64_t seed = 0;
  TrainConfig config;
};

struct RunOutcome {
  RunSpec spec;
  std::optional<TrainingResult> training;
  std::optional<MetricsReport> test;  // internal test split, best checkpoint
  std::string error;
};

inline TrainConfig variant_config(const std::string& variant, const nlohmann::json& overrides, std::uint64_t seed) {
  TrainConfig c = train_config_from_json(overrides);
  c.switches = variant_switches(variant);
  c.seed = seed;
  return c;
}

/// Generates the run's benchmark, trains, and scores the selected checkpoint
/// on the internal test split. Failures are captured, not thrown.
inline RunOutcome execute_run(const RunSpec& spec, const nlohmann::json& benchmark, bool keep_training = false) {
  RunOutcome out{spec, std::nullopt, std::nullopt, {}};
  try {
    const BenchmarkConfig bench = benchmark_for_seed(benchmark, spec.seed);
    const DomainRegistry registry = registry_of(bench);
    const auto data = generate_benchmark(bench);
    TrainingResult result = run_training(spec.config, registry, data);
    out.test = evaluate(result.best.params, data[0].test, category_partition(registry));
    if (keep_training) out.training = std::move(result);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

/// Runs jobs on up to `jobs` worker threads; results keep input order.
template <typename Fn>
auto parallel_map(std::size_t count, std::size_t jobs, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < count; i = next++) slots[i].emplace(fn(i));
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Expands the plan into runs ordered by (variant, sweep value, seed).
inline std::vector<RunSpec> expand_plan(const AblationPlan& plan) {
  std::vector<RunSpec> runs;
  const std::vector<double> values = plan.sweep == SweepParameter::kNone ? std::vector<double>{0.0} : plan.sweep_values;
  for (const auto& v : plan.variants)
    for (double value : values)
      for (auto seed : plan.seeds) {
        RunSpec r{v, seed, variant_config(v, plan.train, seed)};
        if (plan.sweep == SweepParameter::kLambdaTat) r.config.lambda_tat = value;
        if (plan.sweep == SweepParameter::kLambdaUte) r.config.lambda_ute = value;
        runs.push_back(std::move(r));
      }
  return runs;
}

inline std::vector<RunOutcome> run_plan(const AblationPlan& plan, std::size_t jobs = 1, bool keep_training = false) {
  const auto runs = expand_plan(plan);
  return parallel_map(runs.size(), jobs,
                      [&](std::size_t i) { return execute_run(runs[i], plan.benchmark, keep_training); });
}

/// variant,seed,lambda_tat,lambda_ute,category,auc,note -- one row per scored
/// category, three aggregate rows per run, one error row for failed runs.
inline std::string ablation_report_csv(const std::vector<RunOutcome>& outcomes) {
  std::string out = "variant,seed,lambda_tat,lambda_ute,category,auc,note\n";
  for (const auto& o : outcomes) {
    std::string prefix = o.spec.variant + "," + std::to_string(o.spec.seed) + ",";
    detail::append_shortest(prefix, o.spec.config.lambda_tat);
    prefix += ',';
    detail::append_shortest(prefix, o.spec.config.lambda_ute);
    prefix += ',';
    auto row = [&](const std::string& category, const std::optional<double>& value, const std::string& note) {
      out += prefix + category + ",";
      if (value) detail::append_shortest(out, *value);
      out += "," + note + "\n";
    };
    if (!o.error.empty() || !o.test) {
      std::string note = o.error;
      std::replace(note.begin(), note.end(), ',', ';');
      std::replace(note.begin(), note.end(), '\n', ' ');
      row("error", std::nullopt, note);
      continue;
    }
    const auto& r = *o.test;
    for (std::size_t c = 0; c < r.per_category.size(); ++c)
      if (r.per_category[c].auc) row(std::to_string(c), r.per_category[c].auc, "");
    row("mean", r.mean, "");
    row("mean_common", r.mean_common, "");
    row("mean_internal_only", r.mean_internal_only, "");
  }
  return out;
}

inline std::string ablation_suite(const AblationPlan& plan, std::size_t jobs = 1) {
  return ablation_report_csv(run_plan(plan, jobs));
}

// ---------------------------------------------------------------------------
// Domain probe
// ---------------------------------------------------------------------------

struct ProbeOptions {
  int epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
};

struct ProbeResult {
  std::vector<double> accuracy;  // per probed feature (common category, or the trunk feature)
  double mean_accuracy = 0.0;
};

/// Trains a fresh discriminator-shaped network to tell internal from external
/// samples using frozen features, then reports held-out accuracy. Each
/// domain's rows are split in half: the first half trains, the rest tests.
inline ProbeResult domain_probe(const nn::ModelParams& params, const Dataset& internal, const Dataset& external,
                                std::uint64_t seed, const ProbeOptions& options = {}) {
  const auto fi = nn::forward(params, internal.features);
  const auto fe = nn::forward(params, external.features);
  std::vector<std::pair<const Matrix*, const Matrix*>> probes;
  if (params.arch.head_mode == nn::HeadMode::kPerTask) {
    for (CategoryId c : params.arch.common)
      probes.emplace_back(&fi.features[static_cast<std::size_t>(c)], &fe.features[static_cast<std::size_t>(c)]);
  } else {
    probes.emplace_back(&fi.trunk_feature(), &fe.trunk_feature());
  }
  if (probes.empty()) throw Error(ErrorCode::kNoCommonCategories, "nothing to probe");

  ProbeResult result;
  Rng rng(derive_seed(seed, 0x9e0be));
  for (const auto& [a, b] : probes) {
    const Eigen::Index ha = a->rows() / 2, hb = b->rows() / 2;
    Matrix train_x(ha + hb, a->cols());
    train_x << a->topRows(ha), b->topRows(hb);
    std::vector<bool> train_y(static_cast<std::size_t>(ha + hb), false);
    std::fill_n(train_y.begin(), ha, true);

    nn::ModelParams probe;
    probe.arch.leaky_slope = params.arch.leaky_slope;
    probe.arch.projection_dim = params.arch.projection_dim;
    probe.arch.discriminator_widths = params.arch.discriminator_widths;
    probe.discriminators.nets.push_back(
        {nn::kHolisticDiscriminator, nn::make_discriminator_net(probe.arch, static_cast<int>(a->cols()), rng)});
    auto adam = nn::make_adam_state(probe.discriminators);

    std::vector<std::size_t> order(static_cast<std::size_t>(train_x.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < options.epochs; ++e) {
      rng.shuffle(order.begin(), order.end());
      for (std::size_t s = 0; s + options.batch_size <= order.size(); s += options.batch_size) {
        Matrix x(static_cast<Eigen::Index>(options.batch_size), train_x.cols());
        Vector grad(static_cast<Eigen::Index>(options.batch_size));
        for (std::size_t i = 0; i < options.batch_size; ++i)
          x.row(static_cast<Eigen::Index>(i)) = train_x.row(static_cast<Eigen::Index>(order[s + i]));
        const auto pass = nn::run_discriminator(probe, 0, x);
        for (std::size_t i = 0; i < options.batch_size; ++i) {
          const double p = pass.probs(static_cast<Eigen::Index>(i));
          // gradient of the mean binary cross entropy w.r.t. p
          grad(static_cast<Eigen::Index>(i)) =
              (train_y[order[s + i]] ? -1.0 / p : 1.0 / (1.0 - p)) / static_cast<double>(options.batch_size);
        }
        nn::DiscriminatorParams g;
        g.nets.push_back({nn::kHolisticDiscriminator, nn::discriminator_backward(probe, pass, grad).grads});
        nn::adam_step(probe.discriminators, adam, g, options.lr);
      }
    }
    const auto pa = nn::run_discriminator(probe, 0, a->bottomRows(a->rows() - ha)).probs;
    const auto pb = nn::run_discriminator(probe, 0, b->bottomRows(b->rows() - hb)).probs;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < pa.size(); ++i) correct += pa(i) > 0.5 ? 1 : 0;
    for (Eigen::Index i = 0; i < pb.size(); ++i) correct += pb(i) <= 0.5 ? 1 : 0;
    result.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(pa.size() + pb.size()));
  }
  result.mean_accuracy = std::accumulate(result.accuracy.begin(), result.accuracy.end(), 0.0) /
                         static_cast<double>(result.accuracy.size());
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check of the full composite objective
// ---------------------------------------------------------------------------

/// A random tiny instance: two domains, four categories of which two are
/// common, mixed known/unknown labels, ensemble targets and a gate.
struct CompositeProblem {
  nn::ModelParams params;
  Batch internal;
  Batch external;
  TaskWeightTable weights;
  Matrix target_internal;
  Matrix target_external;
  ObjectiveContext context;  // pointers refer into this object; do not copy
};

inline std::unique_ptr<CompositeProblem> make_composite_problem(std::uint64_t seed,
                                                               nn::AdversaryMode adversary = nn::AdversaryMode::kPerTask) {
  constexpr int kInput = 5, kCategories = 4, kBatch = 4;
  Rng rng(derive_seed(seed, 0x67ad));
  auto prob = std::make_unique<CompositeProblem>();
  nn::Architecture arch;
  arch.input_dim = kInput;
  arch.trunk_widths = {6, 5};
  arch.projection_dim = 3;
  arch.num_categories = kCategories;
  arch.common = {0, 1};
  arch.adversary = adversary;
  arch.head_mode = adversary == nn::AdversaryMode::kHolistic ? nn::HeadMode::kHolistic : nn::HeadMode::kPerTask;
  prob->params = nn::init_model(arch, rng);
  // non-zero biases so every code path carries signal
  nn::for_each_tensor(prob->params, [&](const std::string& path, Matrix& t) {
    if (path.ends_with(".bias"))
      for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = 0.1 * rng.normal();
  });

  auto make = [&](DomainId d, const CategorySet& space) {
    Batch b;
    b.domain = d;
    b.features.resize(kBatch, kInput);
    for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features(i) = rng.normal();
    b.labels = LabelGrid(kBatch, kCategories);
    for (std::size_t i = 0; i < kBatch; ++i)
      for (std::size_t c = 0; c < kCategories; ++c)
        b.labels(i, c) = space.contains(static_cast<CategoryId>(c))
                             ? (rng.uniform() < 0.4 ? LabelValue::kPresent : LabelValue::kAbsent)
                             : LabelValue::kUnknown;
    return b;
  };
  prob->internal = make(0, {0, 1, 2});
  prob->external = make(1, {0, 1, 3});
  for (int c = 0; c < kCategories; ++c) {
    prob->weights.alpha.push_back(c < 2 ? 3.0 : 1.0);
    prob->weights.beta.push_back(0.5 + 2.0 * rng.uniform());
  }
  auto targets = [&]() {
    Matrix z(kBatch, kCategories);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform();
    return z;
  };
  prob->target_internal = targets();
  prob->target_external = targets();
  auto& ctx = prob->context;
  ctx.weights = &prob->weights;
  ctx.lambda_tat = 0.5;
  ctx.lambda_ute = 2.0;
  ctx.adversarial = true;
  ctx.ute = true;
  ctx.threshold = 0.05;
  ctx.target_internal = &prob->target_internal;
  ctx.target_external = &prob->target_external;
  return prob;
}

/// Checks the generator-side gradient of the composite loss and the
/// discriminator-side gradient of the (negated) discriminator objective.
inline nn::GradCheckReport composite_grad_check(std::uint64_t seed, double eps,
                                                nn::AdversaryMode adversary = nn::AdversaryMode::kPerTask) {
  const auto prob = make_composite_problem(seed, adversary);
  const auto& p = *prob;
  nn::Objective generator{
      [&](const nn::ModelParams& m) {
        const auto fi = nn::forward(m, p.internal.features);
        const auto fe = nn::forward(m, p.external.features);
        return evaluate_generator(m, p.internal, &p.external, p.context, fi, &fe).loss.total;
      },
      [&](const nn::ModelParams& m) {
        const auto fi = nn::forward(m, p.internal.features);
        const auto fe = nn::forward(m, p.external.features);
        return evaluate_generator(m, p.internal, &p.external, p.context, fi, &fe).grads;
      }};
  nn::Objective discriminator{
      [&](const nn::ModelParams& m) {
        return -evaluate_discriminators(m, nn::forward(m, p.internal.features), nn::forward(m, p.external.features))
                    .objective;
      },
      [&](const nn::ModelParams& m) {
        return evaluate_discriminators(m, nn::forward(m, p.internal.features), nn::forward(m, p.external.features))
            .grads;
      }};
  auto is_disc = [](const std::string& path) { return path.starts_with("disc."); };
  return nn::worst_of(
      nn::compare_gradients(p.params, generator, eps, [&](const std::string& s) { return !is_disc(s); }),
      nn::compare_gradients(p.params, discriminator, eps, is_disc));
}

}  // namespace partialmine
