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

#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "partialmine/nn/gradcheck.hpp"
#include "partialmine/nn/optim.hpp"
#include "partialmine/nn/serialize.hpp"

namespace pm = partialmine;
namespace nn = partialmine::nn;
using nn::Matrix;
using nn::Vector;

namespace {

pm::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const pm::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return pm::ErrorCode::kIo;
}

nn::Architecture tiny_arch(nn::HeadMode head = nn::HeadMode::kPerTask,
                           nn::AdversaryMode adv = nn::AdversaryMode::kPerTask) {
  nn::Architecture a;
  a.input_dim = 5;
  a.trunk_widths = {6, 4};
  a.projection_dim = 3;
  a.num_categories = 3;
  a.head_mode = head;
  a.adversary = adv;
  a.common = {0, 2};
  return a;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, pm::Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

// sum(W .* probs) + sum_c sum(v_c .* D_c(f_c)), with its analytic gradient.
nn::Objective linear_readout(const Matrix& x, std::uint64_t seed) {
  pm::Rng rng(seed);
  auto w = std::make_shared<Matrix>(random_matrix(x.rows(), 3, rng));
  auto v = std::make_shared<Vector>(random_matrix(x.rows(), 1, rng).col(0));
  nn::Objective obj;
  obj.value = [x, w, v](const nn::ModelParams& p) {
    const auto fp = nn::forward(p, x);
    double s = (fp.probs.array() * w->array()).sum();
    for (const auto& d : p.discriminators.nets) {
      const auto dp = d.category == nn::kHolisticDiscriminator
                          ? nn::discriminate_holistic(p, fp.trunk_feature())
                          : nn::discriminate(p, fp.features[static_cast<std::size_t>(d.category)], d.category);
      s += dp.probs.dot(*v);
    }
    return s;
  };
  obj.gradient = [x, w, v](const nn::ModelParams& p) {
    const auto fp = nn::forward(p, x);
    nn::GeneratorSeeds seeds;
    seeds.dprobs = *w;
    seeds.dfeatures.resize(fp.features.size());
    std::vector<nn::Mlp> disc_grads;
    for (const auto& d : p.discriminators.nets) {
      if (d.category == nn::kHolisticDiscriminator) {
        const auto dp = nn::discriminate_holistic(p, fp.trunk_feature());
        auto back = nn::discriminator_backward(p, dp, *v);
        seeds.dtrunk_feature = back.dinput;
        disc_grads.push_back(std::move(back.grads));
      } else {
        const auto c = static_cast<std::size_t>(d.category);
        const auto dp = nn::discriminate(p, fp.features[c], d.category);
        auto back = nn::discriminator_backward(p, dp, *v);
        seeds.dfeatures[c] = back.dinput;
        disc_grads.push_back(std::move(back.grads));
      }
    }
    auto g = nn::backward(p, fp, seeds);
    for (std::size_t i = 0; i < disc_grads.size(); ++i) g.discriminators.nets[i].net = disc_grads[i];
    return g;
  };
  return obj;
}

nn::ModelParams zeroed(nn::ModelParams p) {
  nn::for_each_tensor(p, [](const std::string&, Matrix& t) { t.setZero(); });
  return p;
}

double leaky(double v) { return v > 0 ? v : 0.2 * v; }
double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

}  // namespace

TEST(Forward, ZeroWeightsGiveOneHalf) {
  pm::Rng rng(1);
  const auto p = zeroed(nn::init_model(tiny_arch(), rng));
  const auto fp = nn::forward(p, random_matrix(7, 5, rng));
  EXPECT_TRUE((fp.probs.array() == 0.5).all());
  for (const auto& d : p.discriminators.nets) {
    const auto dp = nn::run_discriminator(p, nn::discriminator_index(p, d.category), random_matrix(4, 3, rng));
    EXPECT_TRUE((dp.probs.array() == 0.5).all());
  }
}

TEST(Forward, Shapes) {
  nn::Architecture a = tiny_arch();
  a.projection_dim = 8;
  pm::Rng rng(2);
  const auto p = nn::init_model(a, rng);
  const auto fp = nn::forward(p, random_matrix(4, 5, rng));
  ASSERT_EQ(fp.features.size(), 3u);
  for (const auto& f : fp.features) {
    EXPECT_EQ(f.rows(), 4);
    EXPECT_EQ(f.cols(), 8);
  }
  EXPECT_EQ(fp.probs.rows(), 4);
  EXPECT_EQ(fp.probs.cols(), 3);
  EXPECT_TRUE((fp.probs.array() > 0.0).all() && (fp.probs.array() < 1.0).all());
  EXPECT_EQ(p.discriminators.nets.size(), 2u);
  EXPECT_EQ(p.generator.projections.size(), 3u);
  EXPECT_EQ(p.generator.heads.size(), 3u);
}

TEST(Forward, MatchesScalarHandEvaluation) {
  nn::Architecture a;
  a.input_dim = 2;
  a.trunk_widths = {1};
  a.projection_dim = 1;
  a.num_categories = 1;
  a.adversary = nn::AdversaryMode::kNone;
  pm::Rng rng(3);
  auto p = nn::init_model(a, rng);
  p.generator.trunk[0].weight << 0.7, -1.3;
  p.generator.trunk[0].bias << 0.05;
  p.generator.projections[0].weight << 1.5;
  p.generator.projections[0].bias << -0.2;
  p.generator.heads[0].weight << 0.9;
  p.generator.heads[0].bias << 0.1;
  Matrix x(2, 2);
  x << 1.0, 0.25, -0.5, 0.75;  // second row drives the trunk negative
  const auto fp = nn::forward(p, x);
  for (int i = 0; i < 2; ++i) {
    const double h = leaky(0.7 * x(i, 0) - 1.3 * x(i, 1) + 0.05);
    const double f = 1.5 * h - 0.2;
    const double expected = sigmoid(0.9 * f + 0.1);
    EXPECT_NEAR(fp.features[0](i, 0), f, 1e-12);
    EXPECT_NEAR(fp.probs(i, 0), expected, 1e-12);
  }
}

TEST(Forward, HolisticHeadMatchesHandEvaluation) {
  nn::Architecture a;
  a.input_dim = 2;
  a.trunk_widths = {};
  a.num_categories = 2;
  a.head_mode = nn::HeadMode::kHolistic;
  a.adversary = nn::AdversaryMode::kNone;
  pm::Rng rng(3);
  auto p = nn::init_model(a, rng);
  p.generator.classifier.weight << 1.0, -2.0, 0.5, 0.25;
  p.generator.classifier.bias << 0.0, 1.0;
  Matrix x(1, 2);
  x << 0.3, -0.4;
  const auto fp = nn::forward(p, x);
  EXPECT_NEAR(fp.probs(0, 0), sigmoid(0.3 - 0.2), 1e-12);
  EXPECT_NEAR(fp.probs(0, 1), sigmoid(-0.6 - 0.1 + 1.0), 1e-12);
}

TEST(Forward, Errors) {
  pm::Rng rng(4);
  const auto p = nn::init_model(tiny_arch(), rng);
  EXPECT_EQ(code_of([&] { nn::forward(p, random_matrix(2, 4, rng)); }), pm::ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([&] { nn::forward(p, Matrix(0, 5)); }), pm::ErrorCode::kShapeMismatch);
  Matrix bad = random_matrix(2, 5, rng);
  bad(1, 3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { nn::forward(p, bad); }), pm::ErrorCode::kNonFiniteActivation);
  auto huge = p;
  huge.generator.trunk[0].weight.setConstant(1e300);
  huge.generator.trunk[1].weight.setConstant(1e300);
  EXPECT_EQ(code_of([&] { nn::forward(huge, random_matrix(2, 5, rng).cwiseAbs()); }),
            pm::ErrorCode::kNonFiniteActivation);
}

TEST(Forward, IsPure) {
  pm::Rng rng(5);
  const auto p = nn::init_model(tiny_arch(), rng);
  const Matrix x = random_matrix(6, 5, rng);
  const auto a = nn::forward(p, x), b = nn::forward(p, x);
  EXPECT_TRUE((a.probs.array() == b.probs.array()).all());
}

TEST(Discriminator, MatchesScalarHandEvaluation) {
  nn::Architecture a;
  a.input_dim = 2;
  a.trunk_widths = {2};
  a.projection_dim = 1;
  a.num_categories = 2;
  a.common = {1};
  a.discriminator_widths = {1, 1};
  pm::Rng rng(6);
  auto p = nn::init_model(a, rng);
  auto& layers = p.discriminators.nets.at(0).net.layers;
  ASSERT_EQ(layers.size(), 3u);
  layers[0].weight << 2.0;
  layers[0].bias << -0.5;
  layers[1].weight << -1.5;
  layers[1].bias << 0.3;
  layers[2].weight << 0.8;
  layers[2].bias << 0.2;
  Matrix f(3, 1);
  f << 0.9, -0.4, 0.1;
  const auto dp = nn::discriminate(p, f, 1);
  for (int i = 0; i < 3; ++i) {
    const double h1 = leaky(2.0 * f(i, 0) - 0.5);
    const double h2 = leaky(-1.5 * h1 + 0.3);
    EXPECT_NEAR(dp.probs(i), sigmoid(0.8 * h2 + 0.2), 1e-12);
  }
}

TEST(Discriminator, NonCommonCategoryRejected) {
  pm::Rng rng(7);
  const auto p = nn::init_model(tiny_arch(), rng);
  const Matrix f = random_matrix(2, 3, rng);
  EXPECT_EQ(code_of([&] { nn::discriminate(p, f, 1); }), pm::ErrorCode::kNotCommonCategory);
  EXPECT_EQ(code_of([&] { nn::discriminate(p, f, 7); }), pm::ErrorCode::kNotCommonCategory);
  EXPECT_EQ(code_of([&] { nn::discriminate_holistic(p, random_matrix(2, 4, rng)); }),
            pm::ErrorCode::kNotCommonCategory);
  EXPECT_EQ(code_of([&] { nn::discriminate(p, random_matrix(2, 5, rng), 0); }), pm::ErrorCode::kShapeMismatch);
}

TEST(Backward, ZeroSeedGivesZeroGradient) {
  pm::Rng rng(8);
  const auto p = nn::init_model(tiny_arch(), rng);
  const auto fp = nn::forward(p, random_matrix(5, 5, rng));
  nn::GeneratorSeeds seeds;
  seeds.dprobs = Matrix::Zero(5, 3);
  const auto g = nn::backward(p, fp, seeds);
  nn::for_each_tensor(g, [](const std::string& path, const Matrix& t) { EXPECT_TRUE(t.isZero(0.0)) << path; });
  const auto empty = nn::backward(p, fp, {});
  nn::for_each_tensor(empty, [](const std::string& path, const Matrix& t) { EXPECT_TRUE(t.isZero(0.0)) << path; });
}

TEST(Backward, DuplicateSampleDoublesGradient) {
  pm::Rng rng(9);
  const auto p = nn::init_model(tiny_arch(), rng);
  const Matrix x = random_matrix(1, 5, rng);
  const Matrix w = random_matrix(1, 3, rng);
  Matrix xx(2, 5), ww(2, 3);
  xx << x, x;
  ww << w, w;
  const auto one = nn::backward(p, nn::forward(p, x), {w, {}, {}});
  const auto two = nn::backward(p, nn::forward(p, xx), {ww, {}, {}});
  std::vector<Matrix> a;
  nn::for_each_tensor(one, [&](const std::string&, const Matrix& t) { a.push_back(2.0 * t); });
  std::size_t i = 0;
  nn::for_each_tensor(two, [&](const std::string& path, const Matrix& t) {
    EXPECT_TRUE((t.array() == a[i++].array()).all()) << path;
  });
}

TEST(Backward, CacheMismatch) {
  pm::Rng rng(10);
  const auto p = nn::init_model(tiny_arch(), rng);
  auto other_arch = tiny_arch();
  other_arch.trunk_widths = {4};
  const auto q = nn::init_model(other_arch, rng);
  const Matrix x = random_matrix(3, 5, rng);
  const auto fq = nn::forward(q, x);
  EXPECT_EQ(code_of([&] { nn::backward(p, fq, {Matrix::Ones(3, 3), {}, {}}); }), pm::ErrorCode::kCacheMismatch);
  const auto fp = nn::forward(p, x);
  EXPECT_EQ(code_of([&] { nn::backward(p, fp, {Matrix::Ones(2, 3), {}, {}}); }), pm::ErrorCode::kCacheMismatch);
  EXPECT_EQ(code_of([&] { nn::backward(p, fp, {{}, {}, Matrix::Ones(3, 5)}); }), pm::ErrorCode::kCacheMismatch);
  const auto dp = nn::discriminate(p, fp.features[0], 0);
  EXPECT_EQ(code_of([&] { nn::discriminator_backward(p, dp, Vector::Ones(2)); }), pm::ErrorCode::kCacheMismatch);
}

TEST(Backward, GeneratorPassLeavesDiscriminatorsAtZero) {
  pm::Rng rng(11);
  const auto p = nn::init_model(tiny_arch(), rng);
  const auto fp = nn::forward(p, random_matrix(4, 5, rng));
  const auto g = nn::backward(p, fp, {random_matrix(4, 3, rng), {}, {}});
  nn::for_each_tensor(g.discriminators, [](const std::string& path, const Matrix& t) { EXPECT_TRUE(t.isZero(0.0)) << path; });
  double generator_mass = 0.0;
  nn::for_each_tensor(g.generator, [&](const std::string&, const Matrix& t) { generator_mass += t.cwiseAbs().sum(); });
  EXPECT_GT(generator_mass, 0.0);
}

TEST(GradCheck, RandomModelsAllModes) {
  struct Mode {
    nn::HeadMode head;
    nn::AdversaryMode adv;
  };
  for (Mode mode : {Mode{nn::HeadMode::kPerTask, nn::AdversaryMode::kPerTask},
                    Mode{nn::HeadMode::kPerTask, nn::AdversaryMode::kHolistic},
                    Mode{nn::HeadMode::kHolistic, nn::AdversaryMode::kHolistic},
                    Mode{nn::HeadMode::kHolistic, nn::AdversaryMode::kNone}}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto report = nn::grad_check(
          [&](std::uint64_t s) {
            pm::Rng rng(s);
            return nn::init_model(tiny_arch(mode.head, mode.adv), rng);
          },
          [](const nn::ModelParams&, std::uint64_t s) {
            pm::Rng rng(s + 100);
            return linear_readout(random_matrix(4, 5, rng), s);
          },
          seed, 1e-5);
      EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_path;
      EXPECT_EQ(report.checked, nn::parameter_count([&] {
                  pm::Rng rng(seed);
                  return nn::init_model(tiny_arch(mode.head, mode.adv), rng);
                }()));
    }
  }
}

TEST(GradCheck, QuadraticOnLinearModelIsTight) {
  // Holistic head, no trunk: logits = x W + b; loss = 0.5 * sum(logits^2) is
  // quadratic in the parameters, so central differences are exact.
  nn::Architecture a;
  a.input_dim = 3;
  a.trunk_widths = {};
  a.num_categories = 2;
  a.head_mode = nn::HeadMode::kHolistic;
  a.adversary = nn::AdversaryMode::kNone;
  pm::Rng rng(12);
  const auto p = nn::init_model(a, rng);
  const Matrix x = random_matrix(4, 3, rng);
  nn::Objective obj;
  obj.value = [x](const nn::ModelParams& q) { return 0.5 * nn::forward(q, x).logits.squaredNorm(); };
  obj.gradient = [x](const nn::ModelParams& q) {
    auto g = nn::zero_gradients(q);
    const Matrix logits = nn::forward(q, x).logits;
    g.generator.classifier.weight = x.transpose() * logits;
    g.generator.classifier.bias = logits.colwise().sum();
    return g;
  };
  EXPECT_LT(nn::compare_gradients(p, obj, 1e-5).max_relative_error, 1e-9);
}

TEST(GradCheck, CorruptedGradientIsFlagged) {
  pm::Rng rng(13);
  const auto p = nn::init_model(tiny_arch(), rng);
  auto obj = linear_readout(random_matrix(4, 5, rng), 13);
  auto honest = obj.gradient;
  obj.gradient = [honest](const nn::ModelParams& q) {
    auto g = honest(q);
    g.generator.projections[1].weight(2, 0) += 0.5;
    return g;
  };
  const auto report = nn::compare_gradients(p, obj, 1e-5);
  EXPECT_GT(report.max_relative_error, 1e-2);
  EXPECT_EQ(report.worst_path, "projection.1.weight[2,0]");
}

TEST(GradCheck, EpsRange) {
  pm::Rng rng(14);
  const auto p = nn::init_model(tiny_arch(), rng);
  const auto obj = linear_readout(random_matrix(2, 5, rng), 1);
  EXPECT_EQ(code_of([&] { nn::compare_gradients(p, obj, 1e-2); }), pm::ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([&] { nn::compare_gradients(p, obj, 1e-8); }), pm::ErrorCode::kInvalidConfig);
}

namespace {

nn::GeneratorParams scalar_block(double theta) {
  nn::GeneratorParams g;
  g.classifier = {Matrix::Constant(1, 1, theta), Matrix::Zero(1, 1)};
  return g;
}

nn::GeneratorParams scalar_grad(double v) {
  nn::GeneratorParams g;
  g.classifier = {Matrix::Constant(1, 1, v), Matrix::Zero(1, 1)};
  return g;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  auto block = scalar_block(1.25);
  auto state = nn::make_adam_state(block);
  state.first[0](0, 0) = 0.0;
  adam_step(block, state, scalar_grad(0.0), 0.1);
  EXPECT_EQ(block.classifier.weight(0, 0), 1.25);
  EXPECT_EQ(state.step, 1);

  // Accumulators decay under zero gradients.
  auto b2 = scalar_block(0.0);
  auto s2 = nn::make_adam_state(b2);
  nn::adam_step(b2, s2, scalar_grad(1.0), 0.1);
  const double m = s2.first[0](0, 0), v = s2.second[0](0, 0);
  nn::adam_step(b2, s2, scalar_grad(0.0), 0.1);
  EXPECT_DOUBLE_EQ(s2.first[0](0, 0), 0.9 * m);
  EXPECT_DOUBLE_EQ(s2.second[0](0, 0), 0.999 * v);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  auto block = scalar_block(0.0);
  auto state = nn::make_adam_state(block);
  double prev = 0.0;
  for (int t = 1; t <= 2000; ++t) {
    nn::adam_step(block, state, scalar_grad(3.0), 0.01);
    const double step = prev - block.classifier.weight(0, 0);
    prev = block.classifier.weight(0, 0);
    EXPECT_NEAR(step, 0.01, 1e-8) << "step " << t;
  }
}

TEST(Adam, ThreeStepHandTrace) {
  auto block = scalar_block(1.0);
  auto state = nn::make_adam_state(block);
  const double expected[] = {0.900000001, 0.9366103534720749, 0.9502794196738216};
  const double grads[] = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) {
    nn::adam_step(block, state, scalar_grad(grads[i]), 0.1);
    EXPECT_NEAR(block.classifier.weight(0, 0), expected[i], 1e-12);
  }
  EXPECT_EQ(state.step, 3);
}

TEST(RmsProp, ThreeStepHandTrace) {
  auto block = scalar_block(1.0);
  auto state = nn::make_rmsprop_state(block);
  const double expected[] = {9.99999899553572e-08, 0.895323021991522, 0.6758495053504887};
  const double grads[] = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) {
    nn::rmsprop_step(block, state, scalar_grad(grads[i]), 0.1);
    EXPECT_NEAR(block.classifier.weight(0, 0), expected[i], 1e-12);
  }
}

TEST(Optimizers, ShapeMismatch) {
  auto block = scalar_block(1.0);
  auto adam = nn::make_adam_state(block);
  auto rms = nn::make_rmsprop_state(block);
  nn::GeneratorParams wrong;
  wrong.classifier = {Matrix::Zero(2, 1), Matrix::Zero(1, 1)};
  EXPECT_EQ(code_of([&] { nn::adam_step(block, adam, wrong, 0.1); }), pm::ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([&] { nn::rmsprop_step(block, rms, wrong, 0.1); }), pm::ErrorCode::kShapeMismatch);
  EXPECT_EQ(block.classifier.weight(0, 0), 1.0);
}

TEST(Serialize, ModelAndOptimizerRoundTrip) {
  pm::Rng rng(15);
  const auto p = nn::init_model(tiny_arch(), rng);
  auto opt = nn::make_optimizer_state(p);
  const auto fp = nn::forward(p, random_matrix(3, 5, rng));
  auto g = nn::backward(p, fp, {random_matrix(3, 3, rng), {}, {}});
  auto moved = p;
  nn::adam_step(moved.generator, opt.adam, g.generator, 1e-3);
  const auto back = nn::params_from_json(nlohmann::json::parse(nn::params_to_json(moved).dump()));
  EXPECT_EQ(back.arch, moved.arch);
  std::vector<Matrix> a;
  nn::for_each_tensor(moved, [&](const std::string&, const Matrix& t) { a.push_back(t); });
  std::size_t i = 0;
  nn::for_each_tensor(back, [&](const std::string& path, const Matrix& t) {
    EXPECT_TRUE((t.array() == a[i++].array()).all()) << path;
  });
  const auto opt_back = nn::optimizer_from_json(nlohmann::json::parse(nn::optimizer_to_json(opt).dump()));
  EXPECT_EQ(opt_back.adam.step, 1);
  ASSERT_EQ(opt_back.adam.first.size(), opt.adam.first.size());
  for (std::size_t k = 0; k < opt.adam.first.size(); ++k) {
    EXPECT_TRUE((opt_back.adam.first[k].array() == opt.adam.first[k].array()).all());
    EXPECT_TRUE((opt_back.adam.second[k].array() == opt.adam.second[k].array()).all());
  }
  EXPECT_EQ(opt_back.rmsprop.square.size(), opt.rmsprop.square.size());
}

TEST(Serialize, RejectsMissingTensor) {
  pm::Rng rng(16);
  auto j = nn::params_to_json(nn::init_model(tiny_arch(), rng));
  bool removed = false;
  for (auto& el : j.items())
    if (el.value().is_object() && el.value().contains("trunk.0.weight")) {
      el.value().erase("trunk.0.weight");
      removed = true;
    }
  ASSERT_TRUE(removed);
  EXPECT_EQ(code_of([&] { nn::params_from_json(j); }), pm::ErrorCode::kSchemaMismatch);
}

TEST(Init, ValidatesArchitecture) {
  pm::Rng rng(17);
  auto a = tiny_arch(nn::HeadMode::kHolistic, nn::AdversaryMode::kPerTask);
  EXPECT_EQ(code_of([&] { nn::init_model(a, rng); }), pm::ErrorCode::kInvalidConfig);
  a = tiny_arch();
  a.input_dim = 0;
  EXPECT_EQ(code_of([&] { nn::init_model(a, rng); }), pm::ErrorCode::kInvalidConfig);
}
