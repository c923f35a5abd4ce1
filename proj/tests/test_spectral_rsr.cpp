#include <gtest/gtest.h>

#include <cmath>

#include "cffuse/errors.hpp"
#include "cffuse/ops.hpp"
#include "cffuse/rsr.hpp"
#include "cffuse/spectral.hpp"
#include "oracles.hpp"

using namespace cffuse;
using oracle::random_tensor;

TEST(Spectral, MatchesNaiveDft) {
  Rng rng(11);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {4, 6}, {5, 3}}) {
    const auto img = random_tensor({2, h, w}, rng);
    const auto spec = dft2(img);
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<double> plane(img.data().begin() + c * h * w, img.data().begin() + (c + 1) * h * w);
      const auto ref = oracle::naive_dft2(plane, h, w);
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
          EXPECT_LT(std::abs(spec.at(c, u, v) - ref[u * w + v]), 1e-9) << h << "x" << w << " bin " << u << "," << v;
        }
      }
    }
  }
}

TEST(Spectral, DcIsChannelSum) {
  Rng rng(1);
  const auto img = random_tensor({3, 16, 16}, rng);
  const auto spec = dft2(img);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < 256; ++i) s += img[c * 256 + i];
    EXPECT_NEAR(spec.at(c, 0, 0).real(), s, 1e-12);
    EXPECT_NEAR(spec.at(c, 0, 0).imag(), 0.0, 1e-12);
  }
}

TEST(Spectral, RoundTripAndParseval) {
  Rng rng(5);
  for (std::size_t n : {16u, 64u, 12u}) {
    const auto img = random_tensor({1, n, n}, rng);
    const auto spec = dft2(img);
    const auto back = idft2(spec);
    double err = 0.0, e_space = 0.0, e_freq = 0.0;
    for (std::size_t i = 0; i < img.numel(); ++i) {
      err = std::max(err, std::abs(back[i] - img[i]));
      e_space += img[i] * img[i];
      e_freq += spec.re[i] * spec.re[i] + spec.im[i] * spec.im[i];
    }
    EXPECT_LT(err, 1e-9);
    EXPECT_NEAR(e_freq / static_cast<double>(n * n), e_space, 1e-9 * e_space);
  }
}

TEST(Spectral, InverseRejectsAsymmetricSpectrum) {
  ComplexSpectrum spec(1, 4, 4);
  spec.re[1] = 1.0;  // bin (0,1) without its conjugate partner (0,3)
  EXPECT_THROW(idft2(spec), NumericError);
  EXPECT_NO_THROW(idft2_real(spec));
}

TEST(Spectral, SpectralFilterWithOnesIsIdentity) {
  Rng rng(2);
  const auto img = random_tensor({3, 8, 8}, rng);
  const auto out = spectral_filter(img, Tensor::ones({8, 8}));
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(out[i], img[i], 1e-12);
}

TEST(Spectral, SpectralFilterGradients) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto img = random_tensor({2, 8, 4}, rng);
    const auto mask = random_tensor({8, 4}, rng, 0.0, 1.0);
    const auto wts = random_tensor({2, 8, 4}, rng);
    const auto rep = oracle::gradcheck(
        [&](const std::vector<Tensor>& v) { return sum(mul(spectral_filter(v[0], v[1]), wts)); }, {img, mask});
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Spectral, AmplitudeMapMatchesSpectrumAndGradients) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto img = random_tensor({3, 8, 8}, rng);
    const auto ref = mean_amplitude(dft2(img));
    const auto amp = amplitude_map(img);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(amp[i], ref[i], 1e-12);
    const auto wts = random_tensor({1, 8, 8}, rng);
    const auto rep =
        oracle::gradcheck([&](const std::vector<Tensor>& v) { return sum(mul(amplitude_map(v[0]), wts)); }, {img});
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Spectral, FftshiftMovesDcToCentre) {
  std::vector<double> v(16, 0.0);
  v[0] = 1.0;
  const auto s = fftshift(Tensor({4, 4}, v));
  EXPECT_EQ(s[2 * 4 + 2], 1.0);
  const auto odd = fftshift(Tensor({3, 3}, {1, 0, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(odd[1 * 3 + 1], 1.0);
}

TEST(Spectral, ShiftedLogAmplitudeCentreIsDc) {
  const auto img = Tensor::full({1, 8, 8}, 0.5);
  const auto disp = shifted_log_amplitude(dft2(img));
  EXPECT_NEAR(disp[4 * 8 + 4], std::log1p(32.0), 1e-12);
  EXPECT_NEAR(disp[0], 0.0, 1e-12);
}

TEST(Rsr, TopkTiesPreferLowerIndex) {
  const std::vector<double> logits{0.5, 1.0, 0.5, 1.0, 0.5};
  EXPECT_EQ(topk_indices(logits, 3), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_THROW(topk_indices(logits, 0), ConfigError);
  EXPECT_THROW(topk_indices(logits, 6), ConfigError);
}

TEST(Rsr, FilterValuesByMode) {
  const auto logits = Tensor({4}, {2.0, -1.0, 0.0, 3.0});
  const auto soft = topk_filter(logits, 2, FilterMode::Soft);
  const auto hard = topk_filter(logits, 2, FilterMode::Hard);
  EXPECT_EQ(soft[0], 1.0);
  EXPECT_EQ(soft[3], 1.0);
  EXPECT_NEAR(soft[1], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_EQ(soft[2], 0.5);
  EXPECT_EQ(hard[1], 0.0);
  EXPECT_EQ(hard[2], 0.0);
  EXPECT_EQ(hard[3], 1.0);
}

TEST(Rsr, ConfigRejectsOutOfRangeK) {
  RsrConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.k = 65;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.k = 64;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Rsr, GridMustTileImage) { EXPECT_THROW(PatchGrid::for_image(8, 8, 20, 16), DimensionError); }

TEST(Rsr, FullKIsIdentityInBothModes) {
  Rng rng(4);
  for (auto mode : {FilterMode::Soft, FilterMode::Hard}) {
    RsrConfig cfg;
    cfg.mode = mode;
    cfg.k = cfg.patch_count();
    ParamStore store;
    Rng init(7);
    ImportanceEncoder enc(store, "enc", cfg, init);
    const auto img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    const auto out = apply_rsr(img, enc, cfg);
    for (std::size_t i = 0; i < img.numel(); ++i) ASSERT_NEAR(out.cleaned[i], img[i], 1e-9);
  }
}

TEST(Rsr, HardFilterIsExactlyBinaryPerPatch) {
  RsrConfig cfg;
  cfg.mode = FilterMode::Hard;
  cfg.k = 20;
  ParamStore store;
  Rng init(3), rng(8);
  ImportanceEncoder enc(store, "enc", cfg, init);
  const auto out = apply_rsr(random_tensor({1, 32, 32}, rng, 0.0, 1.0), enc, cfg);
  std::vector<bool> sel(64, false);
  for (auto s : out.filter.selected) sel[s] = true;
  ASSERT_EQ(out.filter.selected.size(), 20u);
  for (std::size_t u = 0; u < 32; ++u) {
    for (std::size_t v = 0; v < 32; ++v) {
      const std::size_t patch = (u / 4) * 8 + v / 4;
      ASSERT_EQ(out.filter.values[u * 32 + v], sel[patch] ? 1.0 : 0.0);
    }
  }
}

TEST(Rsr, DcOnlyHardFilterGivesChannelMean) {
  // One-pixel patches, so the DC patch is exactly the DC bin.
  Rng rng(6);
  const auto img = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  const auto grid = PatchGrid::for_image(8, 8, 8, 8);
  std::vector<double> m(64, 0.0);
  m[0] = 1.0;
  const auto f = expand_filter(Tensor({64}, m), grid);
  const auto out = spectral_filter(img, f.values);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mean += img[c * 64 + i] / 64.0;
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(out[c * 64 + i], mean, 1e-12);
  }
}

TEST(Rsr, PatchwiseEncoderIsPermutationEquivariant) {
  RsrConfig cfg;
  cfg.encoder = EncoderKind::Patchwise;
  cfg.grid_rows = cfg.grid_cols = 4;
  cfg.k = 5;
  ParamStore store;
  Rng init(2), rng(9);
  ImportanceEncoder enc(store, "enc", cfg, init);
  const auto amp = random_tensor({1, 8, 8}, rng, 0.0, 5.0);
  // Swap patch (0,1) with patch (3,2).
  auto swapped = amp.clone();
  auto d = swapped.mutable_data();
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) std::swap(d[(0 + y) * 8 + 2 + x], d[(6 + y) * 8 + 4 + x]);
  }
  const auto a = enc(amp), b = enc(swapped);
  for (std::size_t p = 0; p < 16; ++p) {
    const std::size_t q = p == 1 ? 14 : p == 14 ? 1 : p;
    EXPECT_NEAR(a[p], b[q], 1e-12);
  }
}

TEST(Rsr, SoftModeGradientsReachEncoderAndImage) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RsrConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 4;
    cfg.k = 6;
    ParamStore store;
    Rng init(seed), rng(seed + 10);
    ImportanceEncoder enc(store, "enc", cfg, init);
    const auto img = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    const auto wts = random_tensor({3, 16, 16}, rng);
    std::vector<Tensor> inputs{img};
    for (auto& p : store.params()) inputs.push_back(p.tensor);
    const auto rep = oracle::gradcheck(
        [&](const std::vector<Tensor>& v) {
          return sum(mul(apply_rsr(v[0], enc, cfg).cleaned, wts));
        },
        inputs);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " input " << rep.worst_input;
  }
}
