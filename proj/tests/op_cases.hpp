// Gradient-check cases shared by the unit tests and the acceptance run.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cffuse/dfs.hpp"
#include "cffuse/losses.hpp"
#include "cffuse/model.hpp"
#include "cffuse/ops.hpp"
#include "cffuse/rsr.hpp"
#include "cffuse/spectral.hpp"
#include "oracles.hpp"

namespace oracle {

using cffuse::Tensor;
using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct OpCase {
  std::string name;
  OpFn f;
  std::vector<Tensor> inputs;
};

/// sum(y * w) with fixed random w, so every output coordinate matters.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  cffuse::Rng rng(seed);
  return cffuse::sum(cffuse::mul(y, random_tensor(y.dims(), rng)));
}

/// One case per differentiable op (several for ops with distinct modes).
/// Straight-through estimators are excluded: their backward is a
/// deliberate surrogate, not the derivative of the forward.
inline std::vector<OpCase> op_cases(std::uint64_t seed) {
  using namespace cffuse;
  Rng rng(seed);
  const auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  const auto pos = random_tensor({3, 4}, rng, 0.2, 2.0);
  const auto s = random_tensor({1}, rng);
  const auto m = random_tensor({4, 2}, rng);
  const auto x = random_tensor({2, 6, 6}, rng);
  const auto k3 = random_tensor({3, 2, 3, 3}, rng), b3 = random_tensor({3}, rng);
  const auto k1 = random_tensor({2, 2, 1, 1}, rng);
  const auto ws = [](const Tensor& t) { return weighted_sum(t); };

  std::vector<OpCase> out{
      {"add", [=](auto& v) { return ws(add(v[0], v[1])); }, {a, b}},
      {"add_scalar_broadcast", [=](auto& v) { return ws(add(v[1], v[0])); }, {a, s}},
      {"sub", [=](auto& v) { return ws(sub(v[0], v[1])); }, {a, b}},
      {"mul", [=](auto& v) { return ws(mul(v[0], v[1])); }, {a, b}},
      {"mul_scalar_broadcast", [=](auto& v) { return ws(mul(v[0], v[1])); }, {a, s}},
      {"scale_neg_add_const", [=](auto& v) { return ws(add(scale(neg(v[0]), 1.5), 0.3)); }, {a}},
      {"exp", [=](auto& v) { return ws(exp(v[0])); }, {a}},
      {"log", [=](auto& v) { return ws(log(v[0])); }, {pos}},
      {"log1p", [=](auto& v) { return ws(log1p(v[0])); }, {pos}},
      {"sigmoid", [=](auto& v) { return ws(sigmoid(v[0])); }, {a}},
      {"tanh", [=](auto& v) { return ws(tanh(v[0])); }, {a}},
      {"silu", [=](auto& v) { return ws(silu(v[0])); }, {a}},
      {"softplus", [=](auto& v) { return ws(softplus(v[0])); }, {a}},
      {"square", [=](auto& v) { return ws(square(v[0])); }, {a}},
      {"smooth_l1", [=](auto& v) { return ws(smooth_l1(scale(v[0], 2.0))); }, {a}},
      {"sum", [](auto& v) { return sum(v[0]); }, {a}},
      {"mean", [](auto& v) { return mean(v[0]); }, {a}},
      {"matmul", [=](auto& v) { return ws(matmul(v[0], v[1])); }, {random_tensor({3, 4}, rng), m}},
      {"reshape", [=](auto& v) { return ws(reshape(v[0], {2, 6})); }, {a}},
      {"flatten", [=](auto& v) { return ws(flatten(v[0])); }, {a}},
      {"concat", [=](auto& v) { return ws(concat({v[0], v[1]})); },
       {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)}},
      {"slice", [=](auto& v) { return ws(slice(v[0], 1, 2)); }, {a}},
      {"softmax_dim0", [=](auto& v) { return ws(softmax(v[0], 0)); }, {a}},
      {"softmax_dim1", [=](auto& v) { return ws(softmax(v[0], 1)); }, {a}},
      {"conv2d_pad_bias", [=](auto& v) { return ws(conv2d(v[0], v[1], v[2], 1, 1)); }, {x, k3, b3}},
      {"conv2d_valid", [=](auto& v) { return ws(conv2d(v[0], v[1], std::nullopt, 1, 0)); }, {x, k3}},
      {"conv2d_stride2", [=](auto& v) { return ws(conv2d(v[0], v[1], std::nullopt, 2, 1)); },
       {random_tensor({2, 5, 5}, rng), k3}},
      {"conv2d_1x1", [=](auto& v) { return ws(conv2d(v[0], v[1], std::nullopt, 1, 0)); }, {x, k1}},
      {"avgpool2d", [=](auto& v) { return ws(avgpool2d(v[0], 2)); }, {x}},
      {"avgpool2d_overlap", [=](auto& v) { return ws(avgpool2d(v[0], 3, 2)); }, {x}},
      {"global_avgpool", [=](auto& v) { return ws(global_avgpool(v[0])); }, {x}},
      {"channel_mean", [=](auto& v) { return ws(channel_mean(v[0])); }, {x}},
      {"resize_nearest", [=](auto& v) { return ws(resize_nearest(v[0], 4, 9)); }, {x}},
      {"layer_norm", [=](auto& v) { return ws(layer_norm(v[0], v[1], v[2])); },
       {x, random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)}},
  };

  // keep_ones: kept entries are constant, the rest pass through.
  out.push_back({"keep_ones", [=](auto& v) { return ws(keep_ones(v[0], {true, false, false, true})); },
                 {random_tensor({4}, rng)}});

  // Spectral.
  out.push_back({"amplitude_map", [=](auto& v) { return ws(amplitude_map(v[0])); }, {random_tensor({3, 8, 8}, rng)}});
  out.push_back({"spectral_filter", [=](auto& v) { return ws(spectral_filter(v[0], v[1])); },
                 {random_tensor({2, 8, 4}, rng), random_tensor({8, 4}, rng, 0.0, 1.0)}});
  out.push_back({"topk_filter_soft", [=](auto& v) { return ws(topk_filter(v[0], 5, FilterMode::Soft)); },
                 {random_tensor({16}, rng, -3.0, 3.0)}});

  // Distributions are formed inside the function so probes stay normalised.
  const auto p = random_tensor({6}, rng), q = random_tensor({6}, rng);
  out.push_back({"feature_distribution", [=](auto& v) { return ws(feature_distribution(v[0])); }, {x}});
  out.push_back({"cross_entropy",
                 [](auto& v) { return cross_entropy(feature_distribution(v[0]), feature_distribution(v[1])); },
                 {p, q}});
  out.push_back({"kl_divergence",
                 [](auto& v) { return kl_divergence(feature_distribution(v[0]), feature_distribution(v[1])); },
                 {p, q}});
  out.push_back({"entropy", [](auto& v) { return entropy(feature_distribution(v[0])); }, {p}});
  out.push_back({"mi_surrogate",
                 [](auto& v) { return mi_surrogate(feature_distribution(v[0]), feature_distribution(v[1])); },
                 {p, q}});
  out.push_back({"shared_specific_losses",
                 [](auto& v) {
                   const auto [li, lv] = shared_specific_losses(v[0], v[1], v[2]);
                   return add(li, scale(lv, 0.7));
                 },
                 {random_tensor({4, 3, 3}, rng), random_tensor({4, 3, 3}, rng), random_tensor({4, 3, 3}, rng)}});
  out.push_back({"total_loss",
                 [](auto& v) { return total_loss(v[0], v[1], v[2], v[3], v[4], 0.25); },
                 {random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng),
                  random_tensor({1}, rng)}});

  // Gating and experts.
  out.push_back({"gate", [](auto& v) { return weighted_sum(gate(v[0], v[1], v[2])); },
                 {random_tensor({3, 4, 4}, rng), random_tensor({3, 4, 4}, rng), random_tensor({6, 2}, rng)}});
  {
    auto store = std::make_shared<ParamStore>();
    Rng init(seed + 100);
    auto ex = std::make_shared<Expert>(*store, "ex", 3, 4, init);
    std::vector<Tensor> inputs{random_tensor({3, 6, 6}, rng), random_tensor({1}, rng, 0.3, 1.0)};
    for (auto& prm : store->params()) inputs.push_back(prm.tensor);
    out.push_back({"expert_apply", [store, ex](auto& v) { return weighted_sum(expert_apply(v[0], v[1], *ex)); },
                   inputs});
  }
  out.push_back({"fuse",
                 [](auto& v) { return weighted_sum(fuse({v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}, 4)); },
                 {random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng),
                  random_tensor({2, 8, 8}, rng), random_tensor({2, 4, 4}, rng), random_tensor({2, 8, 8}, rng),
                  random_tensor({2, 4, 4}, rng)}});
  return out;
}

/// 16x16 model in its exact-gradient configuration: soft spectral filter
/// and gates treated as constants, so backward is the true derivative.
inline cffuse::ModelConfig end_to_end_model(std::uint64_t seed) {
  cffuse::ModelConfig cfg;
  cfg.image_size = 16;
  cfg.seed = seed;
  cfg.rsr.mode = cffuse::FilterMode::Soft;
  cfg.dfs.straight_through = false;
  return cfg;
}

/// Full-model gradcheck over every parameter (6 probes each). A closed
/// expert sees a constant map, so its layer norm runs on eps alone and the
/// loss is strongly curved along that expert's biases; 1e-5 steps carry
/// ~1% truncation error there, so the step is 1e-6.
inline GradReport end_to_end_gradcheck(std::uint64_t seed, std::string* worst_name = nullptr) {
  using namespace cffuse;
  RsdetModel model(end_to_end_model(seed));
  Rng rng(seed + 50);
  const auto v = random_tensor({3, 16, 16}, rng, 0, 1), ir = random_tensor({1, 16, 16}, rng, 0, 1);
  const std::vector<Box> boxes{{2, 3, 9, 8, 1.0, 0}, {8, 7, 15, 15, 1.0, 1}};
  std::vector<Tensor> inputs;
  for (auto& p : model.params().params()) inputs.push_back(p.tensor);
  const auto rep = gradcheck(
      [&](const std::vector<Tensor>&) { return model.loss(model.forward(v, ir), boxes, 0.001).total; }, inputs, 1e-6,
      6);
  if (worst_name) *worst_name = model.params().params()[rep.worst_input].name;
  return rep;
}

}  // namespace oracle
