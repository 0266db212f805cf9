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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "partialmine/experiment.hpp"

namespace pm = partialmine;
namespace nn = partialmine::nn;
namespace fs = std::filesystem;
using nlohmann::json;
using pm::LabelValue;
using pm::Matrix;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// Desk-scale training profile shared by the ablation, probe and sweep runs.
const json kBenchmark = {{"preset", "default"}};
const json kTrain = {{"generator_lr", 1e-3}, {"discriminator_lr", 1e-3}, {"batch_size", 16}};
const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = pm::composite_grad_check(seed, 1e-5);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = r.worst_path;
    }
  }
  const double secs = seconds_since(t0);
  report("gradient_correctness", worst < 1e-5 && secs < 10.0,
         "max relative error " + fmt(worst) + " at " + where + " over 5 seeds, " + fmt(secs, 3) + " s (need < 1e-05, < 10 s)");
}

pm::EpochPredictions constant_predictions(const pm::EmaBuffer& b, double v) {
  pm::EpochPredictions p(b, b.epoch());
  for (std::size_t i = 0; i < b.samples(); ++i)
    p.record(i, Matrix::Constant(1, static_cast<Eigen::Index>(b.categories()), v));
  return p;
}

void ema_oracle() {
  pm::Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double gamma = 0.99 * rng.uniform();
    const int len = 1 + static_cast<int>(rng.below(50));
    pm::EmaBuffer b({"s"}, 1, gamma);
    std::vector<double> hist;
    for (int i = 0; i < len; ++i) {
      hist.push_back(rng.uniform());
      b = pm::ema_update(b, constant_predictions(b, hist.back()));
    }
    // Closed form: bias-corrected geometric average of the history.
    double num = 0.0, den = 0.0;
    for (int i = 0; i < len; ++i) {
      const double w = std::pow(gamma, len - 1 - i);
      num += w * hist[static_cast<std::size_t>(i)];
      den += w;
    }
    worst = std::max(worst, std::abs(pm::ema_target(b)(0, 0) - num / den));
  }
  int fix_miss = 0;
  for (double c : {0.0, 0.1, 0.25, 0.37, 0.5, 0.8, 0.93, 1.0}) {
    pm::EmaBuffer b({"a"}, 1, 0.9);
    b = pm::ema_update(b, constant_predictions(b, c));
    for (int t = 2; t <= 50; ++t) {
      if (pm::ema_target(b)(0, 0) != c) ++fix_miss;
      b = pm::ema_update(b, constant_predictions(b, c));
    }
  }
  report("ema_oracle", worst < 1e-12 && fix_miss == 0,
         "max |recursive - closed form| " + fmt(worst) + " over 100 histories; constant fixpoint misses " +
             std::to_string(fix_miss) + " of 392");
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

void auc_oracle() {
  pm::Rng rng(12);
  int mismatch = 0, transform_miss = 0;
  const std::vector<std::function<double(double)>> transforms = {
      [](double s) { return 3.0 * s - 2.0; }, [](double s) { return std::exp(s); },
      [](double s) { return s * s * s; }, [](double s) { return std::atan(s); }};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    const std::uint64_t levels = 1 + rng.below(40);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(levels)) / 8.0);
      y.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    y[0] = 1;
    y[1] = 0;
    const double a = pm::auc(s, y);
    if (a != pairwise_auc(s, y)) ++mismatch;
    for (const auto& f : transforms) {
      std::vector<double> t;
      for (double v : s) t.push_back(f(v));
      if (pm::auc(t, y) != a) ++transform_miss;
    }
  }
  report("auc_oracle", mismatch == 0 && transform_miss == 0,
         std::to_string(mismatch) + " of 1000 instances differ from the pairwise count; " +
             std::to_string(transform_miss) + " of 4000 monotone transforms change the AUC");
}

void masking_exactness() {
  pm::Rng rng(13);
  nn::Architecture arch;
  arch.input_dim = 5;
  arch.trunk_widths = {6};
  arch.projection_dim = 3;
  arch.num_categories = 4;
  arch.adversary = nn::AdversaryMode::kNone;
  const auto params = nn::init_model(arch, rng);
  const pm::TaskWeightTable w{{3, 1, 3, 2}, {1.5, 2, 0.5, 4}};
  const Eigen::Index n = 8, C = 4;
  int differ = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    Matrix x(n, arch.input_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    pm::LabelGrid y(static_cast<std::size_t>(n), static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t c = 0; c < y.cols(); ++c) {
        const double u = rng.uniform();
        y(i, c) = u < 0.3 ? LabelValue::kPresent : u < 0.7 ? LabelValue::kAbsent : LabelValue::kUnknown;
      }
    const std::size_t ri = rng.below(static_cast<std::uint64_t>(n)), rc = rng.below(static_cast<std::uint64_t>(C));
    y(ri, rc) = rng.uniform() < 0.5 ? LabelValue::kPresent : LabelValue::kAbsent;
    const auto fp = nn::forward(params, x);

    auto masked = y;
    masked(ri, rc) = LabelValue::kUnknown;
    const auto via_mask = pm::partial_bce(fp.probs, masked, w);

    // The same loss with the cell's term deleted from an explicit term list.
    const double scale = 1.0 / (static_cast<double>(C) * static_cast<double>(n));
    Matrix seed = Matrix::Zero(n, C);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t c = 0; c < y.cols(); ++c) {
        if ((i == ri && c == rc) || y(i, c) == LabelValue::kUnknown) continue;
        const double p = fp.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        seed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            y(i, c) == LabelValue::kPresent ? -scale * (w.alpha[c] * w.beta[c]) / p : scale * w.alpha[c] / (1.0 - p);
      }
    const auto ga = nn::backward(params, fp, {via_mask.grad, {}, {}});
    const auto gb = nn::backward(params, fp, {seed, {}, {}});
    std::vector<Matrix> b;
    nn::for_each_tensor(gb, [&](const std::string&, const Matrix& t) { b.push_back(t); });
    std::size_t k = 0;
    bool same = true;
    nn::for_each_tensor(ga, [&](const std::string&, const Matrix& t) { same = same && (t.array() == b[k++].array()).all(); });
    if (!same) ++differ;
  }
  report("masking_exactness", differ == 0,
         std::to_string(differ) + " of " + std::to_string(trials) + " instances differ in any gradient bit");
}

template <typename Block>
std::vector<Matrix> copy_tensors(const Block& b) {
  std::vector<Matrix> out;
  nn::for_each_tensor(b, [&](const std::string&, const Matrix& t) { out.push_back(t); });
  return out;
}

bool same_tensors(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || !(a[i].array() == b[i].array()).all()) return false;
  return true;
}

void minimax_bookkeeping() {
  pm::DefaultBenchmarkOptions o;
  o.samples_per_domain = 650;
  o.seed = 4;
  const auto config = pm::make_default_benchmark(o);
  const auto data = pm::generate_benchmark(config);
  int gen_moved = 0, rms_moved = 0, steps = 0;
  double worst_sum = 0.0;
  for (bool hat : {false, true}) {
    pm::TrainConfig c;
    c.batch_size = 16;
    c.trunk_widths = {16};
    c.projection_dim = 6;
    c.seed = 9;
    c.switches.hat_instead_of_tat = hat;
    pm::Trainer t(c, pm::registry_of(config), {&data[0].train, &data[1].train});
    pm::Rng rng(14);
    for (int step = 0; step < 20; ++step, ++steps) {
      std::vector<std::size_t> ri, re;
      for (std::size_t i = 0; i < 16; ++i) {
        ri.push_back(rng.below(data[0].train.size()));
        re.push_back(rng.below(data[1].train.size()));
      }
      std::sort(ri.begin(), ri.end());
      ri.erase(std::unique(ri.begin(), ri.end()), ri.end());
      const auto bi = t.batch(0, ri), be = t.batch(1, re);
      const auto fi = nn::forward(t.params(), bi.features);
      const auto fe = nn::forward(t.params(), be.features);

      const auto gen = copy_tensors(t.params().generator);
      t.discriminator_update(fi, fe);
      if (!same_tensors(copy_tensors(t.params().generator), gen)) ++gen_moved;

      const auto square = t.optimizer().rmsprop.square;
      const auto loss = t.generator_update(bi, &be, fi, &fe);
      if (!same_tensors(t.optimizer().rmsprop.square, square)) ++rms_moved;
      worst_sum = std::max(worst_sum, std::abs(loss.tat_generator + loss.tat_discriminator));
    }
  }
  report("minimax_bookkeeping", gen_moved == 0 && rms_moved == 0 && worst_sum <= 1e-12,
         std::to_string(steps) + " alternating steps: generator changed by discriminator step " +
             std::to_string(gen_moved) + "x, RMSprop state changed by generator step " + std::to_string(rms_moved) +
             "x, max |V_gen + V_disc| " + fmt(worst_sum));
}

// ---------------------------------------------------------------------------

struct Summary {
  std::map<std::uint64_t, double> mean, common, internal_only;
};

std::map<std::string, Summary> summarise(const std::vector<pm::RunOutcome>& outcomes, int& errors) {
  std::map<std::string, Summary> s;
  for (const auto& o : outcomes) {
    if (!o.error.empty() || !o.test || !o.test->mean) {
      ++errors;
      std::cout << "  run " << o.spec.variant << " seed " << o.spec.seed << " failed: " << o.error << std::endl;
      continue;
    }
    auto& v = s[o.spec.variant];
    v.mean[o.spec.seed] = *o.test->mean;
    if (o.test->mean_common) v.common[o.spec.seed] = *o.test->mean_common;
    if (o.test->mean_internal_only) v.internal_only[o.spec.seed] = *o.test->mean_internal_only;
  }
  return s;
}

std::vector<double> values(const std::map<std::uint64_t, double>& m) {
  std::vector<double> v;
  for (const auto& [k, x] : m) v.push_back(x);
  return v;
}

void ablation_and_probe() {
  pm::AblationPlan plan;
  plan.variants = {"joint", "tw", "tw+tat", "tw+te", "tw+ute", "full"};
  plan.seeds = kSeeds;
  plan.benchmark = kBenchmark;
  plan.train = kTrain;
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcomes = pm::run_plan(plan, jobs(), true);
  const double secs = seconds_since(t0);
  int errors = 0;
  auto s = summarise(outcomes, errors);
  std::cout << "  ablation: " << outcomes.size() << " runs in " << fmt(secs, 4) << " s" << std::endl;
  for (const auto& v : plan.variants)
    std::cout << "  " << v << ": median mean " << fmt(median(values(s[v].mean))) << ", common "
              << fmt(median(values(s[v].common))) << ", internal-only " << fmt(median(values(s[v].internal_only)))
              << std::endl;

  int wins = 0;
  for (auto seed : kSeeds)
    if (s["full"].mean.count(seed) && s["joint"].mean.count(seed) && s["full"].mean[seed] >= s["joint"].mean[seed]) ++wins;
  const bool in_time = secs < 1800.0 && errors == 0;
  report("ablation_i_full_vs_joint", wins >= 8 && in_time,
         "full >= joint on " + std::to_string(wins) + "/10 seeds (need >= 8)");

  const double com_tat = median(values(s["tw+tat"].common)), com_tw = median(values(s["tw"].common));
  report("ablation_ii_tat_common", com_tat > com_tw && in_time,
         "median Mean_Com tw+tat " + fmt(com_tat) + " vs tw " + fmt(com_tw));

  const double int_ute = median(values(s["tw+ute"].internal_only)), int_tw = median(values(s["tw"].internal_only));
  report("ablation_iii_ute_internal", int_ute > int_tw && in_time,
         "median Mean_Int tw+ute " + fmt(int_ute) + " vs tw " + fmt(int_tw));

  const double te = median(values(s["tw+te"].mean)), full = median(values(s["full"].mean));
  report("ablation_iv_gate", te <= full && in_time, "median mean AUC tw+te " + fmt(te) + " vs full " + fmt(full));

  report("ablation_runtime", in_time,
         std::to_string(outcomes.size()) + " runs in " + fmt(secs, 4) + " s on " + std::to_string(jobs()) +
             " thread(s), " + std::to_string(errors) + " failed (need < 1800 s)");

  // Probe frozen common-category features of the selected tw and tw+tat checkpoints.
  std::map<std::string, std::vector<double>> acc;
  for (const auto& o : outcomes) {
    if (o.spec.variant != "tw" && o.spec.variant != "tw+tat") continue;
    if (!o.training) continue;
    const auto bench = pm::benchmark_for_seed(plan.benchmark, o.spec.seed);
    const auto data = pm::generate_benchmark(bench);
    acc[o.spec.variant].push_back(pm::domain_probe(o.training->best.params, data[0].test, data[1].test, o.spec.seed).mean_accuracy);
  }
  const double gap_tw = std::abs(median(acc["tw"]) - 0.5), gap_tat = std::abs(median(acc["tw+tat"]) - 0.5);
  report("domain_confusion", acc["tw"].size() == 10 && acc["tw+tat"].size() == 10 && gap_tw - gap_tat >= 0.05,
         "median probe accuracy tw " + fmt(median(acc["tw"])) + ", tw+tat " + fmt(median(acc["tw+tat"])) +
             " (distance to 50% shrinks by " + fmt(100.0 * (gap_tw - gap_tat), 3) + " points, need >= 5)");
}

void lambda_sweep() {
  pm::AblationPlan plan;
  plan.variants = {"full"};
  plan.seeds = kSeeds;
  plan.benchmark = kBenchmark;
  plan.train = kTrain;
  plan.sweep = pm::SweepParameter::kLambdaTat;
  plan.sweep_values = pm::default_sweep_values(plan.sweep);
  const auto outcomes = pm::run_plan(plan, jobs());
  std::map<std::uint64_t, std::map<double, double>> by_seed;
  int errors = 0;
  for (const auto& o : outcomes) {
    if (!o.error.empty() || !o.test || !o.test->mean) {
      ++errors;
      continue;
    }
    by_seed[o.spec.seed][o.spec.config.lambda_tat] = *o.test->mean;
  }
  const double top = plan.sweep_values.back();
  int minimum = 0;
  for (auto& [seed, curve] : by_seed) {
    if (curve.size() != plan.sweep_values.size()) continue;
    const auto lowest = std::min_element(curve.begin(), curve.end(), [](auto& a, auto& b) { return a.second < b.second; });
    if (lowest->first == top) ++minimum;
  }
  std::vector<double> medians;
  for (double v : plan.sweep_values) {
    std::vector<double> m;
    for (auto& [seed, curve] : by_seed)
      if (curve.count(v)) m.push_back(curve[v]);
    medians.push_back(m.empty() ? std::nan("") : median(m));
  }
  std::string curve;
  for (std::size_t i = 0; i < medians.size(); ++i)
    curve += (i ? ", " : "") + fmt(plan.sweep_values[i]) + ":" + fmt(medians[i]);
  report("lambda_sweep", minimum >= 7 && errors == 0,
         "lambda_tat " + fmt(top) + " is the minimum on " + std::to_string(minimum) + "/10 seeds (need >= 7), " +
             std::to_string(errors) + " failed runs; median mean AUC {" + curve + "}");
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void cli_determinism() {
  const auto dir = fs::temp_directory_path() / "partialmine_acceptance_ablate";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const json plan = {{"variants", {"joint", "full"}}, {"seeds", {1, 2, 3}}, {"benchmark", kBenchmark}, {"train", kTrain}};
  std::ofstream(dir / "plan.json") << plan.dump(2);
  auto run = [&](const std::string& out, std::size_t j) {
    const std::string cmd = std::string("\"") + PARTIALMINE_CLI_PATH + "\" ablate --plan \"" + (dir / "plan.json").string() +
                            "\" --out \"" + (dir / out).string() + "\" --jobs " + std::to_string(j) + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const int ra = run("a.csv", 1);
  const int rb = run("b.csv", jobs());
  const auto a = slurp(dir / "a.csv"), b = slurp(dir / "b.csv");
  const bool ok = ra == 0 && rb == 0 && !a.empty() && a == b && a.find(",error,") == std::string::npos;
  report("ablate_determinism", ok,
         std::string(a == b ? "byte-identical" : "different") + " reports (" + std::to_string(a.size()) +
             " bytes, 6 runs) from two ablate invocations");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);
  try {
    gradient_correctness();
    ema_oracle();
    auc_oracle();
    masking_exactness();
    minimax_bookkeeping();
    cli_determinism();
    ablation_and_probe();
    lambda_sweep();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance harness: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
