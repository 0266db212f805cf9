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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "partialmine/core.hpp"
#include "partialmine/error.hpp"
#include "partialmine/rng.hpp"

namespace partialmine {

using json = nlohmann::json;

/// Ground-truth labelling rule shared by every domain: category c is present
/// iff w_c . z + b_c > 0, then flipped with probability label_noise_rate.
struct ConceptModel {
  int latent_dim = 0;
  std::vector<std::vector<double>> weights;  // C x k
  std::vector<double> biases;                // C
  double label_noise_rate = 0.0;

  int num_categories() const noexcept { return static_cast<int>(weights.size()); }
};

/// Appearance of one domain: x = A z + mu + sigma * eps.
struct DomainSpec {
  DomainId id = 0;
  std::string name;
  Eigen::MatrixXd mixing;  // m x k
  Eigen::VectorXd offset;  // m
  double noise_sd = 0.0;
  CategorySet label_space;
  std::size_t sample_count = 0;

  int feature_dim() const noexcept { return static_cast<int>(mixing.rows()); }
};

struct SplitFractions {
  double train = 8.0 / 13.0;
  double val = 1.0 / 13.0;
  double test = 4.0 / 13.0;
};

struct BenchmarkConfig {
  ConceptModel concept_model;
  std::vector<DomainSpec> domains;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

enum class Split { kTrain, kVal, kTest };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

struct Dataset {
  Eigen::MatrixXd features;  // n x m
  PartialLabelMatrix labels;
  Split split = Split::kTrain;

  std::size_t size() const noexcept { return labels.samples(); }
};

struct DomainData {
  Dataset train;
  Dataset val;
  Dataset test;

  const Dataset& get(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kVal: return val;
      case Split::kTest: return test;
    }
    return train;
  }
};

/// Sets every label outside `label_space` to unknown.
inline Dataset mask_to_label_space(const Dataset& dataset, const CategorySet& label_space) {
  const auto& src = dataset.labels;
  LabelGrid grid = src.labels();
  for (std::size_t c = 0; c < grid.cols(); ++c) {
    if (label_space.contains(static_cast<CategoryId>(c))) continue;
    for (std::size_t i = 0; i < grid.rows(); ++i) grid(i, c) = LabelValue::kUnknown;
  }
  return {dataset.features, PartialLabelMatrix(std::move(grid), src.sample_ids(), src.domain_of()),
          dataset.split};
}

inline DomainRegistry registry_of(const BenchmarkConfig& config) {
  DomainRegistry registry(config.concept_model.num_categories());
  for (std::size_t d = 0; d < config.domains.size(); ++d) {
    if (config.domains[d].id != static_cast<DomainId>(d))
      throw Error(ErrorCode::kInvalidRegistry, "domain ids must be dense and in order");
    registry.add(config.domains[d].name, config.domains[d].label_space);
  }
  return registry;
}

namespace detail {

inline void check_fractions(const SplitFractions& f) {
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0) ||
      std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw Error(ErrorCode::kBadFractions, "split fractions must be positive and sum to 1");
}

inline std::string sample_id(const std::string& domain, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return domain + "-" + digits;
}

}  // namespace detail

/// Draws every domain's samples and splits them into train/val/test. The
/// arithmetic is plain sequential loops so the output depends only on the
/// seed, not on vectorisation choices.
inline std::vector<DomainData> generate_benchmark(const BenchmarkConfig& config) {
  detail::check_fractions(config.fractions);
  const auto& model = config.concept_model;
  const int k = model.latent_dim;
  const int C = model.num_categories();
  if (k <= 0 || C <= 0 || static_cast<int>(model.biases.size()) != C)
    throw Error(ErrorCode::kInvalidConfig, "concept model shape");
  for (const auto& w : model.weights)
    if (static_cast<int>(w.size()) != k)
      throw Error(ErrorCode::kInvalidConfig, "concept weight vector length");
  if (!(model.label_noise_rate >= 0.0 && model.label_noise_rate < 0.5))
    throw Error(ErrorCode::kInvalidConfig, "label_noise_rate must lie in [0, 0.5)");
  (void)registry_of(config);

  int m = -1;
  for (const auto& spec : config.domains) {
    if (spec.mixing.cols() != k)
      throw Error(ErrorCode::kInvalidConfig, "mixing matrix of domain '" + spec.name + "' has " +
                                                 std::to_string(spec.mixing.cols()) + " columns");
    if (m < 0) m = spec.feature_dim();
    if (spec.feature_dim() != m || spec.offset.size() != m)
      throw Error(ErrorCode::kInvalidConfig, "feature dimension differs between domains");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(spec.mixing);
    if (lu.rank() < k)
      throw Error(ErrorCode::kRankDeficient, "mixing matrix of domain '" + spec.name +
                                                 "' has rank " + std::to_string(lu.rank()));
  }

  std::vector<DomainData> out;
  out.reserve(config.domains.size());
  for (const auto& spec : config.domains) {
    const std::size_t n = spec.sample_count;
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.fractions.train));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.fractions.val));
    if (n_train + n_val > n) throw Error(ErrorCode::kBadFractions, "split rounding overflow");

    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(spec.id)));
    Eigen::MatrixXd features(static_cast<Eigen::Index>(n), m);
    LabelGrid labels(n, static_cast<std::size_t>(C));
    std::vector<double> z(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : z) v = rng.normal();
      for (int c = 0; c < C; ++c) {
        double s = model.biases[static_cast<std::size_t>(c)];
        const auto& w = model.weights[static_cast<std::size_t>(c)];
        for (int l = 0; l < k; ++l) s += w[static_cast<std::size_t>(l)] * z[static_cast<std::size_t>(l)];
        bool present = s > 0.0;
        if (rng.uniform() < model.label_noise_rate) present = !present;
        labels(i, static_cast<std::size_t>(c)) = present ? LabelValue::kPresent : LabelValue::kAbsent;
      }
      for (int j = 0; j < m; ++j) {
        double x = 0.0;
        for (int l = 0; l < k; ++l) x += spec.mixing(j, l) * z[static_cast<std::size_t>(l)];
        x += spec.offset(j);
        x += spec.noise_sd * rng.normal();
        features(static_cast<Eigen::Index>(i), j) = x;
      }
    }

    auto slice = [&](std::size_t begin, std::size_t end, Split split) {
      std::vector<std::size_t> rows;
      std::vector<std::string> ids;
      for (std::size_t i = begin; i < end; ++i) {
        rows.push_back(i);
        ids.push_back(detail::sample_id(spec.name, i));
      }
      Dataset ds{features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)),
                 PartialLabelMatrix(labels.select_rows(rows), std::move(ids),
                                    std::vector<DomainId>(end - begin, spec.id)),
                 split};
      return mask_to_label_space(ds, spec.label_space);
    };
    out.push_back({slice(0, n_train, Split::kTrain), slice(n_train, n_train + n_val, Split::kVal),
                   slice(n_train + n_val, n, Split::kTest)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Default synthetic benchmark
// ---------------------------------------------------------------------------

/// Knobs of the built-in two-domain benchmark. Domain 0 is the internal
/// dataset, domain 1 the external one. Categories [0, common) are labelled in
/// both; the next `internal_only` only in domain 0; the rest only in domain 1.
struct DefaultBenchmarkOptions {
  int latent_dim = 16;
  int feature_dim = 32;
  int num_categories = 10;
  int common = 6;
  int internal_only = 2;
  std::size_t samples_per_domain = 13000;
  std::size_t internal_samples = 0;  // 0 means samples_per_domain
  double shift = 1.5;         // scale of the external mixing-matrix perturbation
  double offset_scale = 1.0;  // external mean offset
  double noise_sd = 0.3;
  double label_noise_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Builds the concept model and both domains' appearance maps from
/// `options.seed`. Biases are spread over [-1, 0] so positive rates sit
/// roughly between 16% and 50%.
inline BenchmarkConfig make_default_benchmark(const DefaultBenchmarkOptions& options) {
  const int k = options.latent_dim;
  const int m = options.feature_dim;
  const int C = options.num_categories;
  if (options.common < 0 || options.internal_only < 0 || options.common + options.internal_only > C || m < k)
    throw Error(ErrorCode::kInvalidConfig, "default benchmark options");

  Rng rng(derive_seed(options.seed, 0xbe11c4a7ULL));
  BenchmarkConfig config;
  config.seed = options.seed;
  config.concept_model.latent_dim = k;
  config.concept_model.label_noise_rate = options.label_noise_rate;
  for (int c = 0; c < C; ++c) {
    std::vector<double> w(static_cast<std::size_t>(k));
    double norm = 0.0;
    for (auto& v : w) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : w) v /= norm;
    config.concept_model.weights.push_back(std::move(w));
    config.concept_model.biases.push_back(C > 1 ? -1.0 + static_cast<double>(c % C) / (C - 1) : 0.0);
  }

  auto gaussian = [&](int rows, int cols, double sd) {
    Eigen::MatrixXd a(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) a(i, j) = sd * rng.normal();
    return a;
  };
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  const Eigen::MatrixXd base = gaussian(m, k, scale);
  const Eigen::MatrixXd perturbation = gaussian(m, k, scale);
  Eigen::VectorXd offset(m);
  for (int j = 0; j < m; ++j) offset(j) = options.offset_scale * rng.normal() / std::sqrt(static_cast<double>(m));

  CategorySet all, internal, external;
  for (int c = 0; c < C; ++c) {
    all.insert(c);
    if (c < options.common + options.internal_only) internal.insert(c);
    if (c < options.common || c >= options.common + options.internal_only) external.insert(c);
  }
  DomainSpec a{0, "internal", base, Eigen::VectorXd::Zero(m), options.noise_sd, internal,
               options.internal_samples ? options.internal_samples : options.samples_per_domain};
  DomainSpec b{1, "external", base + options.shift * perturbation, offset, options.noise_sd, external,
               options.samples_per_domain};
  config.domains = {a, b};
  return config;
}

// ---------------------------------------------------------------------------
// JSON form of the benchmark config
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Eigen::MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != c)
      throw Error(ErrorCode::kInvalidConfig, "ragged matrix in config");
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return a;
}

inline json benchmark_to_json(const BenchmarkConfig& config) {
  json j;
  j["schema"] = "partialmine.benchmark/1";
  j["seed"] = config.seed;
  j["split_fractions"] = {config.fractions.train, config.fractions.val, config.fractions.test};
  j["concept"] = {{"latent_dim", config.concept_model.latent_dim},
                  {"weights", config.concept_model.weights},
                  {"biases", config.concept_model.biases},
                  {"label_noise_rate", config.concept_model.label_noise_rate}};
  json domains = json::array();
  for (const auto& d : config.domains) {
    std::vector<double> offset(d.offset.data(), d.offset.data() + d.offset.size());
    domains.push_back({{"id", d.id},
                       {"name", d.name},
                       {"mixing", matrix_to_json(d.mixing)},
                       {"offset", offset},
                       {"noise_sd", d.noise_sd},
                       {"label_space", d.label_space},
                       {"sample_count", d.sample_count}});
  }
  j["domains"] = std::move(domains);
  return j;
}

inline DefaultBenchmarkOptions default_options_from_json(const json& j) {
  DefaultBenchmarkOptions o;
  o.latent_dim = j.value("latent_dim", o.latent_dim);
  o.feature_dim = j.value("feature_dim", o.feature_dim);
  o.num_categories = j.value("num_categories", o.num_categories);
  o.common = j.value("common", o.common);
  o.internal_only = j.value("internal_only", o.internal_only);
  o.samples_per_domain = j.value("samples_per_domain", o.samples_per_domain);
  o.internal_samples = j.value("internal_samples", o.internal_samples);
  o.shift = j.value("shift", o.shift);
  o.offset_scale = j.value("offset_scale", o.offset_scale);
  o.noise_sd = j.value("noise_sd", o.noise_sd);
  o.label_noise_rate = j.value("label_noise_rate", o.label_noise_rate);
  o.seed = j.value("seed", o.seed);
  return o;
}

/// Accepts either a full explicit config or {"preset": "default", ...options}.
inline BenchmarkConfig benchmark_from_json(const json& j) {
  try {
    if (j.contains("preset")) {
      if (j.at("preset").get<std::string>() != "default")
        throw Error(ErrorCode::kInvalidConfig, "unknown benchmark preset");
      return make_default_benchmark(default_options_from_json(j));
    }
    BenchmarkConfig config;
    config.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("split_fractions")) {
      const auto& f = j.at("split_fractions");
      config.fractions = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
    }
    const auto& c = j.at("concept");
    config.concept_model.latent_dim = c.at("latent_dim").get<int>();
    config.concept_model.weights = c.at("weights").get<std::vector<std::vector<double>>>();
    config.concept_model.biases = c.at("biases").get<std::vector<double>>();
    config.concept_model.label_noise_rate = c.value("label_noise_rate", 0.0);
    for (const auto& d : j.at("domains")) {
      DomainSpec spec;
      spec.id = d.at("id").get<DomainId>();
      spec.name = d.at("name").get<std::string>();
      spec.mixing = matrix_from_json(d.at("mixing"));
      const auto offset = d.at("offset").get<std::vector<double>>();
      spec.offset = Eigen::Map<const Eigen::VectorXd>(offset.data(), static_cast<Eigen::Index>(offset.size()));
      spec.noise_sd = d.value("noise_sd", 0.0);
      spec.label_space = d.at("label_space").get<CategorySet>();
      spec.sample_count = d.at("sample_count").get<std::size_t>();
      config.domains.push_back(std::move(spec));
    }
    return config;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("benchmark config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV dataset files
// ---------------------------------------------------------------------------

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

/// Shortest text that parses back to the same double.
inline void append_shortest(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

/// Serialises to `id,domain,x0..x{m-1},y0..y{C-1}` with 17 significant digits.
inline std::string dataset_to_csv(const Dataset& dataset) {
  const auto m = dataset.features.cols();
  const auto C = dataset.labels.categories();
  std::string out = "id,domain";
  for (Eigen::Index j = 0; j < m; ++j) out += ",x" + std::to_string(j);
  for (std::size_t c = 0; c < C; ++c) out += ",y" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += dataset.labels.sample_ids()[i];
    out += ',';
    out += std::to_string(dataset.labels.domain_of()[i]);
    for (Eigen::Index j = 0; j < m; ++j) {
      out += ',';
      detail::append_double(out, dataset.features(static_cast<Eigen::Index>(i), j));
    }
    for (std::size_t c = 0; c < C; ++c) {
      out += ',';
      out += std::to_string(label_code(dataset.labels(i, c)));
    }
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_csv(std::string_view text, Split split = Split::kTrain) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  if (lines.empty()) throw Error(ErrorCode::kSchemaMismatch, "missing header");

  const auto header = detail::split_commas(lines[0]);
  if (header.size() < 2 || header[0] != "id")
    throw Error(ErrorCode::kSchemaMismatch, "column 0: expected 'id'");
  if (header[1] != "domain") throw Error(ErrorCode::kSchemaMismatch, "column 1: expected 'domain'");
  std::size_t m = 0;
  while (2 + m < header.size() && header[2 + m] == "x" + std::to_string(m)) ++m;
  std::size_t C = 0;
  while (2 + m + C < header.size() && header[2 + m + C] == "y" + std::to_string(C)) ++C;
  if (2 + m + C != header.size())
    throw Error(ErrorCode::kSchemaMismatch, "column " + std::to_string(2 + m + C) + ": unexpected '" +
                                                std::string(header[2 + m + C]) + "'");

  const std::size_t n = lines.size() - 1;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  LabelGrid labels(n, C);
  std::vector<std::string> ids;
  std::vector<DomainId> domains;
  ids.reserve(n);
  domains.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cells = detail::split_commas(lines[i + 1]);
    if (cells.size() != header.size())
      throw Error(ErrorCode::kSchemaMismatch, "row " + std::to_string(i) + " has " +
                                                  std::to_string(cells.size()) + " columns, expected " +
                                                  std::to_string(header.size()));
    ids.emplace_back(cells[0]);
    int domain = 0;
    auto r = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), domain);
    if (r.ec != std::errc() || r.ptr != cells[1].data() + cells[1].size())
      throw Error(ErrorCode::kSchemaMismatch, "row " + std::to_string(i) + " column domain");
    domains.push_back(domain);
    for (std::size_t j = 0; j < m; ++j) {
      const auto cell = cells[2 + j];
      double v = 0.0;
      auto rr = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (rr.ec != std::errc() || rr.ptr != cell.data() + cell.size())
        throw Error(ErrorCode::kSchemaMismatch, "row " + std::to_string(i) + " column x" + std::to_string(j));
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
    for (std::size_t c = 0; c < C; ++c) {
      const auto cell = cells[2 + m + c];
      int code = 0;
      auto rr = std::from_chars(cell.data(), cell.data() + cell.size(), code);
      if (rr.ec != std::errc() || rr.ptr != cell.data() + cell.size())
        throw Error(ErrorCode::kSchemaMismatch, "row " + std::to_string(i) + " column y" + std::to_string(c));
      if (code != 1 && code != 0 && code != -2)
        throw Error(ErrorCode::kBadLabelCode, "row " + std::to_string(i) + " column y" + std::to_string(c) +
                                                  " value " + std::to_string(code));
      labels(i, c) = parse_label(code);
    }
  }
  return {std::move(features), PartialLabelMatrix(std::move(labels), std::move(ids), std::move(domains)), split};
}

inline void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << dataset_to_csv(dataset);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Dataset read_dataset_csv(const std::filesystem::path& path, Split split = Split::kTrain) {
  return dataset_from_csv(read_text_file(path), split);
}

/// File name used for one (domain, split) pair inside a data directory.
inline std::string dataset_file_name(const std::string& domain, Split split) {
  return domain + "_" + std::string(split_name(split)) + ".csv";
}

/// Writes every (domain, split) CSV plus `benchmark.json` and `manifest.json`
/// (registry: domain ids, names and label spaces) into `dir`.
inline void write_benchmark_dir(const BenchmarkConfig& config, const std::vector<DomainData>& data,
                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["schema"] = "partialmine.manifest/1";
  manifest["num_categories"] = config.concept_model.num_categories();
  manifest["domains"] = json::array();
  for (std::size_t d = 0; d < data.size(); ++d) {
    const auto& spec = config.domains[d];
    manifest["domains"].push_back({{"id", spec.id}, {"name", spec.name}, {"label_space", spec.label_space}});
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
      write_dataset_csv(data[d].get(s), dir / dataset_file_name(spec.name, s));
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir / "benchmark.json") << benchmark_to_json(config).dump(2) << '\n';
}

struct BenchmarkDir {
  DomainRegistry registry;
  std::vector<DomainData> data;
};

inline BenchmarkDir read_benchmark_dir(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("manifest.json: ") + e.what());
  }
  BenchmarkDir out{DomainRegistry(manifest.at("num_categories").get<int>()), {}};
  for (const auto& d : manifest.at("domains")) {
    const auto name = d.at("name").get<std::string>();
    out.registry.add(name, d.at("label_space").get<CategorySet>());
    DomainData dd{read_dataset_csv(dir / dataset_file_name(name, Split::kTrain), Split::kTrain),
                  read_dataset_csv(dir / dataset_file_name(name, Split::kVal), Split::kVal),
                  read_dataset_csv(dir / dataset_file_name(name, Split::kTest), Split::kTest)};
    out.data.push_back(std::move(dd));
  }
  return out;
}

}  // namespace partialmine
