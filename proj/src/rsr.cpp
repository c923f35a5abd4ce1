#include "cffuse/rsr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cffuse/ops.hpp"
#include "cffuse/spectral.hpp"

namespace cffuse {

std::string to_string(FilterMode mode) { return mode == FilterMode::Soft ? "soft" : "hard"; }

FilterMode parse_filter_mode(const std::string& text) {
  if (text == "soft") return FilterMode::Soft;
  if (text == "hard") return FilterMode::Hard;
  throw ConfigError("filter mode must be soft or hard, got '" + text + "'");
}

PatchGrid PatchGrid::for_image(std::size_t rows, std::size_t cols, std::size_t height, std::size_t width) {
  if (rows == 0 || cols == 0 || height % rows != 0 || width % cols != 0) {
    throw DimensionError("patch grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  return {rows, cols, height / rows, width / cols};
}

void RsrConfig::validate() const {
  if (grid_rows == 0 || grid_cols == 0) throw ConfigError("rsr grid must be non-empty");
  if (k < 1 || k > patch_count()) {
    throw ConfigError("rsr.K must lie in [1, " + std::to_string(patch_count()) + "], got " + std::to_string(k));
  }
}

ImportanceEncoder::ImportanceEncoder(ParamStore& store, const std::string& prefix, const RsrConfig& cfg, Rng& rng)
    : kind_(cfg.encoder), rows_(cfg.grid_rows), cols_(cfg.grid_cols) {
  const std::size_t m = cfg.patch_count();
  if (kind_ == EncoderKind::Dense) {
    w1_ = store.add_kaiming(prefix + ".w1", {m, 2 * m}, m, rng);
    b1_ = store.add_constant(prefix + ".b1", {1, 2 * m}, 0.0);
    w2_ = store.add_kaiming(prefix + ".w2", {2 * m, m}, 2 * m, rng);
    b2_ = store.add_constant(prefix + ".b2", {1, m}, 0.0);
  } else {
    const std::size_t hid = cfg.patchwise_hidden;
    w1_ = store.add_kaiming(prefix + ".w1", {1, hid}, 1, rng);
    b1_ = store.add_constant(prefix + ".b1", {1, hid}, 0.0);
    w2_ = store.add_kaiming(prefix + ".w2", {hid, 1}, hid, rng);
    b2_ = store.add_constant(prefix + ".b2", {1, 1}, 0.0);
  }
}

Tensor ImportanceEncoder::operator()(const Tensor& amp) const {
  if (amp.rank() != 3 || amp.dim(0) != 1) {
    throw DimensionError("importance encoder expects [1,H,W], got " + shape_str(amp.dims()));
  }
  const auto grid = PatchGrid::for_image(rows_, cols_, amp.dim(1), amp.dim(2));
  const std::size_t m = grid.count();
  const Tensor patches = avgpool2d(log1p(amp), grid.patch_h, grid.patch_w);
  if (kind_ == EncoderKind::Dense) {
    const Tensor row = reshape(patches, {1, m});
    const Tensor hidden = silu(add(matmul(row, w1_), b1_));
    return reshape(add(matmul(hidden, w2_), b2_), {m});
  }
  // Each patch mean is one row of an [m,1] design matrix; biases are
  // broadcast by multiplying with a column of ones.
  const Tensor col = reshape(patches, {m, 1});
  const Tensor ones = Tensor::ones({m, 1});
  const Tensor hidden = silu(add(matmul(col, w1_), matmul(ones, b1_)));
  return reshape(add(matmul(hidden, w2_), matmul(ones, b2_)), {m});
}

std::vector<std::size_t> topk_indices(std::span<const double> logits, std::size_t k) {
  if (k < 1 || k > logits.size()) {
    throw ConfigError("top-K needs 1 <= K <= " + std::to_string(logits.size()) + ", got " + std::to_string(k));
  }
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor topk_filter(const Tensor& logits, std::size_t k, FilterMode mode, bool straight_through) {
  const auto chosen = topk_indices(logits.data(), k);
  std::vector<bool> keep(logits.numel(), false);
  for (auto i : chosen) keep[i] = true;
  const Tensor soft = keep_ones(sigmoid(logits), keep);
  if (mode == FilterMode::Soft) return soft;
  std::vector<double> hard(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) hard[i] = keep[i] ? 1.0 : 0.0;
  if (straight_through) return cffuse::straight_through(soft, std::move(hard));
  return Tensor(logits.dims(), std::move(hard));
}

SpectralFilter expand_filter(const Tensor& mask, const PatchGrid& grid) {
  if (mask.numel() != grid.count()) {
    throw DimensionError("expand_filter: mask " + shape_str(mask.dims()) + " for a " + std::to_string(grid.rows) +
                         "x" + std::to_string(grid.cols) + " grid");
  }
  const std::size_t h = grid.rows * grid.patch_h, w = grid.cols * grid.patch_w;
  SpectralFilter f;
  f.grid = grid;
  f.values = reshape(resize_nearest(reshape(mask, {1, grid.rows, grid.cols}), h, w), {h, w});
  return f;
}

RsrOutput apply_rsr(const Tensor& image, const ImportanceEncoder& encoder, const RsrConfig& cfg) {
  cfg.validate();
  if (image.rank() != 3) throw DimensionError("apply_rsr: expected [C,H,W], got " + shape_str(image.dims()));
  for (double v : image.data()) {
    if (!std::isfinite(v)) throw NumericError("apply_rsr: non-finite input pixel");
  }
  const auto grid = PatchGrid::for_image(cfg.grid_rows, cfg.grid_cols, image.dim(1), image.dim(2));
  const Tensor amp = amplitude_map(image);
  Tensor logits = encoder(amp);
  const Tensor mask = topk_filter(logits, cfg.k, cfg.mode, cfg.straight_through);
  SpectralFilter filter = expand_filter(mask, grid);
  filter.mode = cfg.mode;
  filter.k = cfg.k;
  filter.selected = topk_indices(logits.data(), cfg.k);
  Tensor cleaned = spectral_filter(image, filter.values);
  return {std::move(cleaned), std::move(filter), std::move(logits)};
}

}  // namespace cffuse
