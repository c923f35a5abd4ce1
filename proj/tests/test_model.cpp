#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cffuse/errors.hpp"
#include "cffuse/model.hpp"
#include "cffuse/ops.hpp"
#include "op_cases.hpp"

using namespace cffuse;
using oracle::random_tensor;

namespace {

void zero_biases(ParamStore& store) {
  for (auto& p : store.params()) {
    const auto& n = p.name;
    if (n.ends_with(".b") || n.ends_with(".bias") || n.ends_with(".b1") || n.ends_with(".b2")) {
      for (double& v : p.tensor.mutable_data()) v = 0.0;
    }
  }
}

bool all_zero(const Tensor& t) {
  for (double v : t.data()) {
    if (v != 0.0) return false;
  }
  return true;
}


}  // namespace

TEST(Backbone, ScaleShapes) {
  ParamStore store;
  Rng rng(1);
  BackboneConfig cfg;
  SpecificExtractor ex(store, "rgb", 3, cfg, rng);
  const auto feats = ex(Tensor::zeros({3, 64, 64}));
  ASSERT_EQ(feats.scales.size(), 4u);
  const std::size_t sizes[] = {32, 16, 8, 4};
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(feats.scales[s].dims(), (Shape{cfg.scale_channels[s], sizes[s], sizes[s]}));
  }
  EXPECT_THROW(ex(Tensor::zeros({3, 24, 24})), DimensionError);
}

TEST(Backbone, ZeroInputZeroBiasGivesZeroFeatures) {
  ParamStore store;
  Rng rng(2);
  BackboneConfig cfg;
  SpecificExtractor ex(store, "ir", 1, cfg, rng);
  SharedExtractor sh(store, "shared", cfg, rng);
  zero_biases(store);
  for (const auto& f : ex(Tensor::zeros({1, 32, 32})).scales) EXPECT_TRUE(all_zero(f));
  EXPECT_TRUE(all_zero(sh(Tensor::zeros({3, 32, 32}), Tensor::zeros({1, 32, 32}))));
}

TEST(Backbone, SharedExtractorSymmetry) {
  ParamStore store;
  Rng rng(3), data(4);
  BackboneConfig cfg;
  SharedExtractor sh(store, "shared", cfg, rng);
  const auto a = random_tensor({3, 32, 32}, data, 0.0, 1.0);
  const auto b = random_tensor({1, 32, 32}, data, 0.0, 1.0);
  const auto ab = sh(a, b), ba = sh(b, a);
  ASSERT_EQ(ab.dims(), (Shape{32, 8, 8}));
  for (std::size_t i = 0; i < ab.numel(); ++i) ASSERT_EQ(ab[i], ba[i]);
  const auto aa = sh(a, a), single = sh.encode_single(a);
  for (std::size_t i = 0; i < aa.numel(); ++i) ASSERT_NEAR(aa[i], single[i], 1e-12);
}

TEST(Backbone, GradcheckThroughTwoScales) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ParamStore store;
    Rng rng(seed), data(seed + 100);
    BackboneConfig cfg;
    cfg.scale_channels = {4, 8};
    cfg.stem_channels = 4;
    SpecificExtractor ex(store, "x", 1, cfg, rng);
    const auto img = random_tensor({1, 16, 16}, data);
    const auto w0 = random_tensor({4, 8, 8}, data), w1 = random_tensor({8, 4, 4}, data);
    std::vector<Tensor> inputs{img};
    for (auto& p : store.params()) inputs.push_back(p.tensor);
    const auto rep = oracle::gradcheck(
        [&](const std::vector<Tensor>& v) {
          const auto f = ex(v[0]);
          return add(sum(mul(f.scales[0], w0)), sum(mul(f.scales[1], w1)));
        },
        inputs, 1e-5, 24);
    EXPECT_LT(rep.max_rel_error, 1e-3) << "seed " << seed << " input " << rep.worst_input;
  }
}

TEST(Backbone, ModalityParametersAreDisjoint) {
  RsdetModel model(ModelConfig{});
  std::set<std::string> rgb, ir;
  for (const auto& p : model.params().params()) {
    if (p.name.starts_with("backbone.rgb.")) rgb.insert(p.name.substr(13));
    if (p.name.starts_with("backbone.ir.")) ir.insert(p.name.substr(12));
  }
  EXPECT_FALSE(rgb.empty());
  // Same layout, distinct storage.
  for (const auto& suffix : rgb) {
    if (!ir.count(suffix)) continue;
    EXPECT_FALSE(model.params().at("backbone.rgb." + suffix).same_storage(model.params().at("backbone.ir." + suffix)));
  }
}

TEST(Dfs, RouterCases) {
  EXPECT_EQ(route(0.5, 0.5, 0.3), std::make_pair(1, 1));
  EXPECT_EQ(route(0.9, 0.1, 0.3), std::make_pair(1, 0));
  EXPECT_EQ(route(0.2, 0.8, 0.3), std::make_pair(0, 1));
  EXPECT_EQ(route(0.3, 0.7, 0.3), std::make_pair(1, 1));  // boundary passes
  const double below = std::nextafter(0.5, 0.0);
  EXPECT_EQ(route(below, below, 0.5), std::make_pair(1, 1));  // rounding fallback
  EXPECT_EQ(route(below, std::nextafter(below, 0.0), 0.5), std::make_pair(1, 0));
  EXPECT_THROW(route(0.5, 0.5, 0.0), ConfigError);
  EXPECT_THROW(route(0.5, 0.5, 0.6), ConfigError);
}

TEST(Dfs, RouterMatchesCaseTableAndIsSymmetric) {
  Rng rng(5);
  for (int n = 0; n < 20000; ++n) {
    const double a = rng.uniform(-4, 4), b = rng.uniform(-4, 4);
    const double wi = 1.0 / (1.0 + std::exp(b - a)), wv = 1.0 - wi;
    const double t = 0.1 * static_cast<double>(1 + n % 5);
    const auto r = route(wi, wv, t);
    const auto expect = oracle::route_table(wi, wv, t);
    if (expect) ASSERT_EQ(r, *expect);
    ASSERT_NE(r, std::make_pair(0, 0));
    const auto s = route(wv, wi, t);
    ASSERT_EQ(s, std::make_pair(r.second, r.first));
  }
}

TEST(Dfs, GateProperties) {
  Rng rng(6);
  const auto fi = random_tensor({4, 3, 3}, rng), fv = random_tensor({4, 3, 3}, rng);
  const auto zero = gate(fi, fv, Tensor::zeros({8, 2}));
  EXPECT_EQ(zero[0], 0.5);
  EXPECT_EQ(zero[1], 0.5);
  const auto w = random_tensor({8, 2}, rng);
  const auto g = gate(fi, fv, w);
  EXPECT_NEAR(g[0] + g[1], 1.0, 1e-12);
  const auto g2 = gate(scale(fi, 3.0), scale(fv, 3.0), w);
  EXPECT_NEAR(g2[0] + g2[1], 1.0, 1e-12);
  EXPECT_THROW(gate(fi, fv, Tensor::zeros({6, 2})), DimensionError);
}

TEST(Dfs, ExpertGateBehaviour) {
  ParamStore store;
  Rng rng(7), data(8);
  Expert ex(store, "e", 4, 8, rng);
  zero_biases(store);
  const auto x = random_tensor({4, 6, 6}, data);
  EXPECT_TRUE(all_zero(expert_apply(x, Tensor::scalar(0.0), ex)));
  const auto open = expert_apply(x, Tensor::scalar(1.0), ex), raw = ex(x);
  ASSERT_EQ(open.dims(), (Shape{8, 6, 6}));
  for (std::size_t i = 0; i < open.numel(); ++i) EXPECT_EQ(open[i], raw[i]);
  std::vector<Tensor> inputs{x};
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  const auto wts = random_tensor({8, 6, 6}, data);
  const auto rep = oracle::gradcheck(
      [&](const std::vector<Tensor>& v) { return sum(mul(expert_apply(v[0], Tensor::scalar(1.0), ex), wts)); },
      inputs);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

TEST(Dfs, FuseShapesAndConvexity) {
  Rng rng(9);
  std::vector<Tensor> ci, cv, wi, wv;
  const std::size_t sizes[] = {32, 16, 8, 4};
  for (std::size_t s = 0; s < 4; ++s) {
    ci.push_back(random_tensor({8, sizes[s], sizes[s]}, rng));
    cv.push_back(random_tensor({8, sizes[s], sizes[s]}, rng));
    const double w = rng.uniform();
    wi.push_back(Tensor::scalar(w));
    wv.push_back(Tensor::scalar(1.0 - w));
  }
  const auto out = fuse(wi, wv, ci, cv, 16);
  ASSERT_EQ(out.dims(), (Shape{32, 16, 16}));
  // Scale 1 is already 16x16: check the convex bound elementwise.
  for (std::size_t i = 0; i < 8 * 256; ++i) {
    const double v = out[8 * 256 + i];
    EXPECT_LE(v, std::max(ci[1][i], cv[1][i]) + 1e-12);
    EXPECT_GE(v, std::min(ci[1][i], cv[1][i]) - 1e-12);
  }
  // IR-only weights reproduce the IR expert.
  std::vector<Tensor> one(4, Tensor::scalar(1.0)), nil(4, Tensor::scalar(0.0));
  const auto only_i = fuse(one, nil, ci, cv, 16);
  for (std::size_t i = 0; i < 8 * 256; ++i) EXPECT_EQ(only_i[8 * 256 + i], ci[1][i]);
  // Identical experts: weights do not matter.
  const auto same = fuse(wi, wv, ci, ci, 16);
  for (std::size_t i = 0; i < 8 * 256; ++i) EXPECT_NEAR(same[8 * 256 + i], ci[1][i], 1e-12);
}

TEST(Losses, FeatureDistribution) {
  const auto p = feature_distribution(Tensor::full({4, 2}, 3.0));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p[i], 0.125, 1e-15);
  Rng rng(1);
  const auto x = random_tensor({5, 3}, rng, -5, 5);
  const auto q = feature_distribution(x), q2 = feature_distribution(add(x, 7.0));
  double s = 0.0;
  for (std::size_t i = 0; i < q.numel(); ++i) {
    s += q[i];
    EXPECT_NEAR(q[i], q2[i], 1e-14);
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Losses, EntropyIdentities) {
  Rng rng(2);
  for (int n = 0; n < 200; ++n) {
    const auto p = feature_distribution(random_tensor({6}, rng, -3, 3));
    const auto q = feature_distribution(random_tensor({6}, rng, -3, 3));
    double hp = 0.0, hq = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      hp -= p[i] * std::log(p[i]);
      hq -= q[i] * std::log(q[i]);
    }
    EXPECT_NEAR(sub(cross_entropy(p, q), kl_divergence(p, q)).item(), hp, 1e-9);
    EXPECT_NEAR(mi_surrogate(p, q).item(), hp + hq, 1e-9);
    EXPECT_NEAR(mi_surrogate(p, q).item(), mi_surrogate(q, p).item(), 1e-12);
    EXPECT_NEAR(mi_surrogate(p, p).item(), 2.0 * entropy(p).item(), 1e-12);
  }
  const auto u = Tensor::full({10}, 0.1);
  EXPECT_NEAR(mi_surrogate(u, u).item(), 2.0 * std::log(10.0), 1e-12);
}

TEST(Losses, SurrogateRejectsInvalidDistributions) {
  EXPECT_THROW(mi_surrogate(Tensor({2}, {0.5, 0.6}), Tensor({2}, {0.5, 0.5})), NumericError);
  EXPECT_THROW(mi_surrogate(Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.5, 0.5})), NumericError);
  EXPECT_THROW(mi_surrogate(Tensor({2}, {0.5, 0.5}), Tensor({3}, {0.2, 0.3, 0.5})), DimensionError);
}

TEST(Losses, SharedSpecificGradients) {
  Rng rng(3);
  const auto a = random_tensor({4, 3, 3}, rng), b = random_tensor({4, 3, 3}, rng), c = random_tensor({4, 3, 3}, rng);
  const auto rep = oracle::gradcheck(
      [](const std::vector<Tensor>& v) {
        const auto [li, lv] = shared_specific_losses(v[0], v[1], v[2]);
        return add(li, scale(lv, 0.7));
      },
      {a, b, c});
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Losses, TotalLossArithmetic) {
  LossReport rep;
  const auto t = total_loss(Tensor::scalar(2.0), Tensor::scalar(2.0), Tensor::scalar(1.0), Tensor::scalar(0.0),
                            Tensor::scalar(0.0), 0.001, &rep);
  EXPECT_NEAR(t.item(), 1.004, 1e-15);
  EXPECT_EQ(rep.gamma, 0.001);
  const auto z = total_loss(Tensor::scalar(5.0), Tensor::scalar(-3.0), Tensor::scalar(0.25), Tensor::scalar(0.5),
                            Tensor::scalar(0.125), 0.0, &rep);
  EXPECT_EQ(z.item(), 0.875);
  EXPECT_NEAR(rep.total, rep.gamma * (rep.l_i_spe + rep.l_v_spe) + rep.l_det_obj + rep.l_det_reg + rep.l_det_cls,
              1e-12);
}

TEST(Model, DefaultShapes) {
  RsdetModel model(ModelConfig{});
  Rng rng(1);
  const auto fwd = model.forward(random_tensor({3, 64, 64}, rng, 0, 1), random_tensor({1, 64, 64}, rng, 0, 1));
  EXPECT_EQ(fwd.fused.dims(), (Shape{32, 16, 16}));
  EXPECT_EQ(fwd.shared.dims(), (Shape{32, 16, 16}));
  EXPECT_EQ(fwd.dfs.decisions.size(), 4u);
  EXPECT_EQ(fwd.filters.size(), 2u);
  for (const auto& d : fwd.dfs.decisions) {
    EXPECT_NEAR(d.w_i + d.w_v, 1.0, 1e-12);
    EXPECT_NE(std::make_pair(d.r_i, d.r_v), std::make_pair(0, 0));
  }
  EXPECT_THROW(model.forward(Tensor::zeros({3, 32, 32}), Tensor::zeros({1, 32, 32})), DimensionError);
}

TEST(Model, ConfigValidation) {
  ModelConfig cfg;
  cfg.backbone.shared_channels = 16;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.image_size = 40;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.dfs.threshold = 0.7;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Model, DeterministicAcrossInstances) {
  RsdetModel a(ModelConfig{}), b(ModelConfig{});
  Rng r1(3), r2(3);
  const auto va = random_tensor({3, 64, 64}, r1, 0, 1), ia = random_tensor({1, 64, 64}, r1, 0, 1);
  const auto fa = a.forward(va, ia), fb = b.forward(va, ia);
  for (std::size_t i = 0; i < fa.fused.numel(); ++i) ASSERT_EQ(fa.fused[i], fb.fused[i]);
}

TEST(Model, BackwardReachesEveryComponent) {
  ModelConfig cfg;
  cfg.image_size = 32;
  RsdetModel model(cfg);
  Rng rng(4);
  const auto fwd = model.forward(random_tensor({3, 32, 32}, rng, 0, 1), random_tensor({1, 32, 32}, rng, 0, 1));
  std::vector<Box> boxes{{4, 4, 14, 12, 1.0, 0}, {18, 16, 30, 30, 1.0, 1}};
  model.loss(fwd, boxes, 0.001).total.backward();
  std::map<std::string, double> norm;
  for (const auto& p : model.params().params()) {
    const auto prefix = p.name.substr(0, p.name.find('.'));
    double s = 0.0;
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) s += g * g;
    norm[prefix] += s;
  }
  for (const char* part : {"rsr", "backbone", "dfs", "head"}) EXPECT_GT(norm[part], 0.0) << part;
}

class EndToEnd : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(EndToEnd, GradcheckAllParameters) {
  std::string worst;
  const auto rep = oracle::end_to_end_gradcheck(GetParam(), &worst);
  EXPECT_LT(rep.max_rel_error, 1e-3) << worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, EndToEnd, ::testing::Values(1u, 2u, 3u));
