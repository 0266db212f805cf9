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

// Command-line front end: generate | train | eval | ablate | gradcheck.
//
// Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numerical
// failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "partialmine/partialmine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace partialmine;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::optional<std::uint64_t> seed_override() {
  const char* env = std::getenv("PARTIALMINE_SEED");
  if (!env || !*env) return std::nullopt;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidConfig, std::string("PARTIALMINE_SEED is not an integer: ") + env);
  }
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
  json j = read_json(config_path);
  if (auto s = seed_override()) j["seed"] = *s;
  const BenchmarkConfig config = benchmark_from_json(j);
  const auto data = generate_benchmark(config);
  write_benchmark_dir(config, data, out_dir);
  std::cout << "wrote " << data.size() << " domains to " << out_dir << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir) {
  TrainConfig config = train_config_from_json(read_json(config_path));
  if (auto s = seed_override()) config.seed = *s;
  const BenchmarkDir bench = read_benchmark_dir(data_dir);
  for (std::size_t d = 0; d < bench.data.size(); ++d)
    for (const Dataset* ds : {&bench.data[d].train, &bench.data[d].val, &bench.data[d].test})
      if (!validate_label_matrix(ds->labels, bench.registry).empty())
        throw Error(ErrorCode::kInvalidLabelMatrix, "labels outside the label space of domain " + std::to_string(d));
  const TrainingResult result = run_training(config, bench.registry, bench.data);

  const fs::path out(out_dir);
  fs::create_directories(out);
  write_text(out / "checkpoint.json", checkpoint_to_json(result.best).dump() + "\n");
  write_text(out / "history.csv", history_csv(result.history));
  json reports = json::array();
  for (const auto& v : result.history.validations)
    reports.push_back({{"step", v.step}, {"epoch", v.epoch}, {"report", metrics_to_json(v.report)}});
  write_text(out / "validation_reports.json", reports.dump(2) + "\n");
  const auto test = evaluate(result.best.params, bench.data[0].test, category_partition(bench.registry));
  write_text(out / "test_report.json", metrics_to_json(test).dump(2) + "\n");
  std::cout << "best validation mean AUC " << selection_score(result.best.validation) << " at step "
            << result.best.step << "; test mean AUC " << (test.mean ? *test.mean : 0.0) << '\n';
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& report_path) {
  const Checkpoint ckpt = checkpoint_from_json(read_json(model_path));
  const Dataset data = read_dataset_csv(data_path, Split::kTest);
  if (!validate_label_matrix(data.labels, ckpt.registry).empty())
    throw Error(ErrorCode::kInvalidLabelMatrix, "labels outside their domain's label space");
  const auto report = evaluate(ckpt.params, data, category_partition(ckpt.registry));
  write_text(report_path, metrics_to_json(report).dump(2) + "\n");
  std::cout << "mean AUC " << (report.mean ? *report.mean : 0.0) << '\n';
  return 0;
}

int cmd_ablate(const std::string& plan_path, const std::string& out_path, std::size_t jobs) {
  AblationPlan plan = plan_from_json(read_json(plan_path));
  if (auto s = seed_override()) plan.seeds = {*s};
  const std::string report = ablation_suite(plan, jobs);
  write_text(out_path, report);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps) {
  const auto report = composite_grad_check(seed, eps);
  std::cout << "checked " << report.checked << " parameters; max relative error " << report.max_relative_error
            << " at " << report.worst_path << " (analytic " << report.analytic << ", numeric " << report.numeric
            << ")\n";
  return report.max_relative_error < 1e-5 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partialmine: joint training on partially labelled, domain-shifted multi-label data"};
  app.require_subcommand(1);

  std::string config, out, data, model, report, plan;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  double eps = 1e-5;

  auto* generate = app.add_subcommand("generate", "generate a synthetic benchmark");
  generate->add_option("--config", config, "benchmark config JSON")->required();
  generate->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", config, "training config JSON")->required();
  train->add_option("--data", data, "benchmark directory written by generate")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint on one dataset CSV");
  eval->add_option("--model", model, "checkpoint JSON")->required();
  eval->add_option("--data", data, "dataset CSV")->required();
  eval->add_option("--report", report, "metrics report JSON to write")->required();

  auto* ablate = app.add_subcommand("ablate", "run an ablation plan");
  ablate->add_option("--plan", plan, "ablation plan JSON")->required();
  ablate->add_option("--out", out, "report CSV")->required();
  ablate->add_option("--jobs", jobs, "parallel worker count")->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the composite loss");
  gradcheck->add_option("--seed", seed, "instance seed");
  gradcheck->add_option("--eps", eps, "central difference step")->check(CLI::Range(1e-7, 1e-3));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(config, out);
    if (*train) return cmd_train(config, data, out);
    if (*eval) return cmd_eval(model, data, report);
    if (*ablate) return cmd_ablate(plan, out, jobs);
    if (*gradcheck) return cmd_gradcheck(seed, eps);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.is_numerical()) return kExitNumerical;
    if (e.code() == ErrorCode::kInvalidConfig) return kExitUsage;
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
