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
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "partialmine/core.hpp"
#include "partialmine/error.hpp"
#include "partialmine/rng.hpp"

namespace partialmine::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Probabilities are kept inside [kProbFloor, 1 - kProbFloor] so every log
/// term of the losses stays finite.
inline constexpr double kProbFloor = 1e-12;

/// Category id used for the single discriminator on the undivided feature.
inline constexpr CategoryId kHolisticDiscriminator = -1;

/// y = x W + b, with W stored in x out.
struct Dense {
  Matrix weight;
  Matrix bias;  // 1 x out

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
  bool empty() const { return weight.size() == 0; }
};

/// Dense stack with a leaky rectifier between consecutive layers and none
/// after the last.
struct Mlp {
  std::vector<Dense> layers;
};

struct Discriminator {
  CategoryId category = 0;
  Mlp net;
};

enum class HeadMode {
  kPerTask,   // C projections N -> N', C heads N' -> 1
  kHolistic,  // one N -> C classifier on the trunk feature
};

enum class AdversaryMode {
  kNone,
  kPerTask,   // one discriminator per common category on f_c
  kHolistic,  // one discriminator on the trunk feature
};

struct Architecture {
  int input_dim = 32;
  std::vector<int> trunk_widths{64, 64};
  int projection_dim = 16;
  int num_categories = 10;
  HeadMode head_mode = HeadMode::kPerTask;
  AdversaryMode adversary = AdversaryMode::kPerTask;
  CategorySet common;                         // categories that get a discriminator
  std::vector<int> discriminator_widths{};    // empty: {N', N'/2}
  double leaky_slope = 0.2;

  int feature_dim() const { return trunk_widths.empty() ? input_dim : trunk_widths.back(); }

  std::vector<int> hidden_discriminator_widths() const {
    if (!discriminator_widths.empty()) return discriminator_widths;
    return {projection_dim, std::max(1, projection_dim / 2)};
  }

  bool operator==(const Architecture&) const = default;
};

struct GeneratorParams {
  std::vector<Dense> trunk;
  std::vector<Dense> projections;  // per-task mode only
  std::vector<Dense> heads;        // per-task mode only
  Dense classifier;                // holistic mode only
};

struct DiscriminatorParams {
  std::vector<Discriminator> nets;
};

struct ModelParams {
  Architecture arch;
  GeneratorParams generator;
  DiscriminatorParams discriminators;
};

/// Same layout as the parameter blocks of ModelParams.
struct Gradients {
  GeneratorParams generator;
  DiscriminatorParams discriminators;
};

// ---------------------------------------------------------------------------
// Tensor traversal
// ---------------------------------------------------------------------------

namespace detail {

template <typename D, typename Fn>
void visit_dense(D& layer, const std::string& prefix, Fn& fn) {
  if (layer.weight.size() == 0) return;
  fn(prefix + ".weight", layer.weight);
  fn(prefix + ".bias", layer.bias);
}

}  // namespace detail

/// Calls fn(path, matrix) for every tensor of a generator block, in a fixed
/// order. Works for const and non-const blocks.
template <typename G, typename Fn>
  requires std::is_same_v<std::remove_const_t<G>, GeneratorParams>
void for_each_tensor(G& g, Fn&& fn) {
  for (std::size_t i = 0; i < g.trunk.size(); ++i)
    detail::visit_dense(g.trunk[i], "trunk." + std::to_string(i), fn);
  for (std::size_t c = 0; c < g.projections.size(); ++c)
    detail::visit_dense(g.projections[c], "projection." + std::to_string(c), fn);
  for (std::size_t c = 0; c < g.heads.size(); ++c)
    detail::visit_dense(g.heads[c], "head." + std::to_string(c), fn);
  detail::visit_dense(g.classifier, "classifier", fn);
}

template <typename D, typename Fn>
  requires std::is_same_v<std::remove_const_t<D>, DiscriminatorParams>
void for_each_tensor(D& d, Fn&& fn) {
  for (auto& disc : d.nets) {
    const std::string name = disc.category == kHolisticDiscriminator
                                 ? std::string("disc.holistic")
                                 : "disc.c" + std::to_string(disc.category);
    for (std::size_t l = 0; l < disc.net.layers.size(); ++l)
      detail::visit_dense(disc.net.layers[l], name + "." + std::to_string(l), fn);
  }
}

template <typename P, typename Fn>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams> ||
           std::is_same_v<std::remove_const_t<P>, Gradients>
void for_each_tensor(P& p, Fn&& fn) {
  for_each_tensor(p.generator, fn);
  for_each_tensor(p.discriminators, fn);
}

template <typename Block>
Block zeros_like(const Block& block) {
  Block out = block;
  for_each_tensor(out, [](const std::string&, Matrix& t) { t.setZero(); });
  return out;
}

inline Gradients zero_gradients(const ModelParams& params) {
  return {zeros_like(params.generator), zeros_like(params.discriminators)};
}

inline std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const Matrix& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

inline Dense make_dense(int in, int out, double sd, Rng& rng) {
  Dense d{Matrix(in, out), Matrix::Zero(1, out)};
  for (int j = 0; j < out; ++j)
    for (int i = 0; i < in; ++i) d.weight(i, j) = sd * rng.normal();
  return d;
}

inline Mlp make_discriminator_net(const Architecture& arch, int input_dim, Rng& rng) {
  Mlp net;
  int in = input_dim;
  for (int w : arch.hidden_discriminator_widths()) {
    net.layers.push_back(make_dense(in, w, std::sqrt(2.0 / in), rng));
    in = w;
  }
  net.layers.push_back(make_dense(in, 1, std::sqrt(1.0 / in), rng));
  return net;
}

/// Gaussian initialisation: He scaling for layers followed by a leaky
/// rectifier, 1/sqrt(fan_in) for linear ones. Biases start at zero.
inline ModelParams init_model(const Architecture& arch, Rng& rng) {
  if (arch.input_dim <= 0 || arch.num_categories <= 0 || arch.projection_dim <= 0)
    throw Error(ErrorCode::kInvalidConfig, "architecture dimensions must be positive");
  ModelParams p;
  p.arch = arch;
  int in = arch.input_dim;
  for (int w : arch.trunk_widths) {
    p.generator.trunk.push_back(make_dense(in, w, std::sqrt(2.0 / in), rng));
    in = w;
  }
  const int N = arch.feature_dim();
  const int Np = arch.projection_dim;
  if (arch.head_mode == HeadMode::kPerTask) {
    for (int c = 0; c < arch.num_categories; ++c)
      p.generator.projections.push_back(make_dense(N, Np, std::sqrt(1.0 / N), rng));
    for (int c = 0; c < arch.num_categories; ++c)
      p.generator.heads.push_back(make_dense(Np, 1, std::sqrt(1.0 / Np), rng));
  } else {
    p.generator.classifier = make_dense(N, arch.num_categories, std::sqrt(1.0 / N), rng);
  }
  switch (arch.adversary) {
    case AdversaryMode::kNone: break;
    case AdversaryMode::kPerTask:
      if (arch.head_mode != HeadMode::kPerTask)
        throw Error(ErrorCode::kInvalidConfig, "per-task discriminators need per-task heads");
      for (CategoryId c : arch.common) p.discriminators.nets.push_back({c, make_discriminator_net(arch, Np, rng)});
      break;
    case AdversaryMode::kHolistic:
      p.discriminators.nets.push_back({kHolisticDiscriminator, make_discriminator_net(arch, N, rng)});
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

inline double logistic(double s) {
  const double p = s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

inline Matrix affine(const Matrix& x, const Dense& layer) {
  Matrix y = x * layer.weight;
  y.rowwise() += layer.bias.row(0);
  return y;
}

inline Matrix leaky(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline Matrix leaky_backward(const Matrix& grad, const Matrix& pre, double slope) {
  return grad.binaryExpr(pre, [slope](double g, double v) { return v > 0.0 ? g : slope * g; });
}

inline void check_finite(const Matrix& m, int layer, const char* where) {
  if (!m.allFinite())
    throw Error(ErrorCode::kNonFiniteActivation, std::string(where) + " layer " + std::to_string(layer));
}

/// Everything the backward pass needs from one generator forward.
struct ForwardPass {
  Matrix input;                 // B x m
  std::vector<Matrix> pre;      // trunk pre-activations
  std::vector<Matrix> post;     // trunk activations
  std::vector<Matrix> features; // per-task f_c, B x N' each (per-task mode)
  Matrix logits;                // B x C
  Matrix probs;                 // B x C

  Eigen::Index batch() const { return input.rows(); }
  const Matrix& trunk_feature() const { return post.empty() ? input : post.back(); }
};

inline ForwardPass forward(const ModelParams& params, const Matrix& x) {
  const auto& arch = params.arch;
  const auto& g = params.generator;
  if (x.rows() == 0) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  if (x.cols() != arch.input_dim)
    throw Error(ErrorCode::kShapeMismatch, "input width " + std::to_string(x.cols()) + " != " +
                                               std::to_string(arch.input_dim));
  check_finite(x, 0, "input");
  ForwardPass fp;
  fp.input = x;
  const Matrix* h = &fp.input;
  int layer = 0;
  for (const auto& d : g.trunk) {
    fp.pre.push_back(affine(*h, d));
    fp.post.push_back(leaky(fp.pre.back(), arch.leaky_slope));
    check_finite(fp.post.back(), layer++, "trunk");
    h = &fp.post.back();
  }
  const auto B = x.rows();
  const auto C = arch.num_categories;
  if (arch.head_mode == HeadMode::kPerTask) {
    fp.logits.resize(B, C);
    fp.features.reserve(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
      fp.features.push_back(affine(*h, g.projections[static_cast<std::size_t>(c)]));
      check_finite(fp.features.back(), layer, "projection");
      fp.logits.col(c) = affine(fp.features.back(), g.heads[static_cast<std::size_t>(c)]).col(0);
    }
  } else {
    fp.logits = affine(*h, g.classifier);
  }
  check_finite(fp.logits, layer + 1, "head");
  fp.probs = fp.logits.unaryExpr([](double s) { return logistic(s); });
  return fp;
}

// ---------------------------------------------------------------------------
// Discriminators
// ---------------------------------------------------------------------------

struct DiscriminatorPass {
  std::size_t index = 0;  // position in DiscriminatorParams::nets
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  Vector probs;  // probability that each row comes from the internal domain
};

inline std::size_t discriminator_index(const ModelParams& params, CategoryId c) {
  const auto& nets = params.discriminators.nets;
  for (std::size_t i = 0; i < nets.size(); ++i)
    if (nets[i].category == c) return i;
  throw Error(ErrorCode::kNotCommonCategory,
              c == kHolisticDiscriminator ? std::string("no holistic discriminator")
                                          : "category " + std::to_string(c) + " has no discriminator");
}

inline DiscriminatorPass run_discriminator(const ModelParams& params, std::size_t index, const Matrix& features) {
  const auto& net = params.discriminators.nets.at(index).net;
  if (features.cols() != net.layers.front().in())
    throw Error(ErrorCode::kShapeMismatch, "discriminator input width");
  DiscriminatorPass dp;
  dp.index = index;
  dp.input = features;
  const Matrix* h = &dp.input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    dp.pre.push_back(affine(*h, net.layers[l]));
    const bool last = l + 1 == net.layers.size();
    dp.post.push_back(last ? dp.pre.back() : leaky(dp.pre.back(), params.arch.leaky_slope));
    check_finite(dp.post.back(), static_cast<int>(l), "discriminator");
    h = &dp.post.back();
  }
  dp.probs = h->col(0).unaryExpr([](double s) { return logistic(s); });
  return dp;
}

/// D_c(f_c) for a common category c.
inline DiscriminatorPass discriminate(const ModelParams& params, const Matrix& features, CategoryId c) {
  if (c == kHolisticDiscriminator || !params.arch.common.contains(c))
    throw Error(ErrorCode::kNotCommonCategory, "category " + std::to_string(c) + " is not common");
  return run_discriminator(params, discriminator_index(params, c), features);
}

/// D(f) for the single discriminator on the trunk feature.
inline DiscriminatorPass discriminate_holistic(const ModelParams& params, const Matrix& trunk_feature) {
  return run_discriminator(params, discriminator_index(params, kHolisticDiscriminator), trunk_feature);
}

struct DiscriminatorBackward {
  Mlp grads;      // same shape as the discriminator net
  Matrix dinput;  // gradient w.r.t. the discriminator input
};

/// Backpropagates d(loss)/d(probs) through one discriminator.
inline DiscriminatorBackward discriminator_backward(const ModelParams& params, const DiscriminatorPass& pass,
                                                    const Vector& dprobs) {
  const auto& net = params.discriminators.nets.at(pass.index).net;
  if (dprobs.size() != pass.probs.size() || pass.pre.size() != net.layers.size())
    throw Error(ErrorCode::kCacheMismatch, "discriminator cache does not match seeds");
  DiscriminatorBackward out;
  out.grads.layers.resize(net.layers.size());
  Matrix grad = (dprobs.array() * pass.probs.array() * (1.0 - pass.probs.array())).matrix();
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (l + 1 != net.layers.size()) grad = leaky_backward(grad, pass.pre[l], params.arch.leaky_slope);
    const Matrix& in = l == 0 ? pass.input : pass.post[l - 1];
    out.grads.layers[l].weight = in.transpose() * grad;
    out.grads.layers[l].bias = grad.colwise().sum();
    grad = grad * net.layers[l].weight.transpose();
  }
  out.dinput = std::move(grad);
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Loss gradients flowing into the generator. Empty matrices mean zero.
struct GeneratorSeeds {
  Matrix dprobs;                  // B x C
  std::vector<Matrix> dfeatures;  // per category, B x N' (or empty)
  Matrix dtrunk_feature;          // B x N
};

/// Exact gradient of a scalar loss w.r.t. every generator parameter given
/// the loss's gradients w.r.t. probabilities and features. The
/// discriminator block of the result is zero.
inline Gradients backward(const ModelParams& params, const ForwardPass& fp, const GeneratorSeeds& seeds) {
  const auto& arch = params.arch;
  const auto& g = params.generator;
  const auto B = fp.batch();
  const auto C = arch.num_categories;
  if (fp.post.size() != g.trunk.size() || fp.probs.rows() != B || fp.probs.cols() != C ||
      (arch.head_mode == HeadMode::kPerTask && fp.features.size() != static_cast<std::size_t>(C)))
    throw Error(ErrorCode::kCacheMismatch, "forward cache does not match the model");
  if (seeds.dprobs.size() != 0 && (seeds.dprobs.rows() != B || seeds.dprobs.cols() != C))
    throw Error(ErrorCode::kCacheMismatch, "probability seed shape");
  if (seeds.dtrunk_feature.size() != 0 &&
      (seeds.dtrunk_feature.rows() != B || seeds.dtrunk_feature.cols() != arch.feature_dim()))
    throw Error(ErrorCode::kCacheMismatch, "trunk feature seed shape");

  Gradients grads = zero_gradients(params);
  auto& gg = grads.generator;
  const Matrix& h = fp.trunk_feature();
  Matrix dlogits = seeds.dprobs.size() != 0
                       ? Matrix((seeds.dprobs.array() * fp.probs.array() * (1.0 - fp.probs.array())).matrix())
                       : Matrix::Zero(B, C);
  Matrix dh = Matrix::Zero(B, h.cols());

  if (arch.head_mode == HeadMode::kPerTask) {
    for (int c = 0; c < C; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      const auto& f = fp.features[cc];
      const auto dlogit = dlogits.col(c);
      gg.heads[cc].weight = f.transpose() * dlogit;
      gg.heads[cc].bias(0, 0) = dlogit.sum();
      Matrix df = dlogit * g.heads[cc].weight.transpose();
      if (cc < seeds.dfeatures.size() && seeds.dfeatures[cc].size() != 0) {
        if (seeds.dfeatures[cc].rows() != B || seeds.dfeatures[cc].cols() != f.cols())
          throw Error(ErrorCode::kCacheMismatch, "feature seed shape for category " + std::to_string(c));
        df += seeds.dfeatures[cc];
      }
      gg.projections[cc].weight = h.transpose() * df;
      gg.projections[cc].bias = df.colwise().sum();
      dh.noalias() += df * g.projections[cc].weight.transpose();
    }
  } else {
    gg.classifier.weight = h.transpose() * dlogits;
    gg.classifier.bias = dlogits.colwise().sum();
    dh.noalias() += dlogits * g.classifier.weight.transpose();
  }
  if (seeds.dtrunk_feature.size() != 0) dh += seeds.dtrunk_feature;

  for (std::size_t l = g.trunk.size(); l-- > 0;) {
    const Matrix dpre = leaky_backward(dh, fp.pre[l], arch.leaky_slope);
    const Matrix& in = l == 0 ? fp.input : fp.post[l - 1];
    gg.trunk[l].weight = in.transpose() * dpre;
    gg.trunk[l].bias = dpre.colwise().sum();
    if (l > 0) dh = dpre * g.trunk[l].weight.transpose();
  }
  return grads;
}

/// Adds `b` into `a` tensor by tensor (shapes must agree).
template <typename Block>
void accumulate(Block& a, const Block& b) {
  std::vector<const Matrix*> src;
  for_each_tensor(b, [&](const std::string&, const Matrix& t) { src.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(a, [&](const std::string& path, Matrix& t) {
    if (i >= src.size() || src[i]->rows() != t.rows() || src[i]->cols() != t.cols())
      throw Error(ErrorCode::kShapeMismatch, "accumulate: " + path);
    t += *src[i++];
  });
  if (i != src.size()) throw Error(ErrorCode::kShapeMismatch, "accumulate: tensor count");
}

}  // namespace partialmine::nn
