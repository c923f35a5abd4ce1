#include "cffuse/model.hpp"

#include <array>

#include "cffuse/ops.hpp"

namespace cffuse {

namespace {

// Per-channel pixel statistics of the usual detection pipelines; the IR
// channel takes the channel averages.
constexpr std::array<double, 3> kRgbMean{0.485, 0.456, 0.406}, kRgbStd{0.229, 0.224, 0.225};
constexpr std::array<double, 1> kIrMean{0.449}, kIrStd{0.226};

// Images are leaves, so normalisation needs no gradient.
template <std::size_t C>
Tensor standardize(const Tensor& x, const std::array<double, C>& mean, const std::array<double, C>& std, bool inverse) {
  std::vector<double> out(x.data().begin(), x.data().end());
  const std::size_t plane = x.numel() / C;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      out[i] = inverse ? out[i] * std[c] + mean[c] : (out[i] - mean[c]) / std[c];
    }
  }
  return Tensor(x.dims(), std::move(out));
}

}  // namespace

void ModelConfig::validate() const {
  rsr.validate();
  dfs.validate();
  if (backbone.scales() < 2) throw ConfigError("backbone needs at least two scales");
  if (backbone.shared_blocks != 2) throw ConfigError("shared encoder must reduce to the second scale (2 blocks)");
  if (backbone.shared_channels != backbone.scales() * dfs.expert_channels) {
    throw ConfigError("shared channels (" + std::to_string(backbone.shared_channels) +
                      ") must equal scales * expert width (" +
                      std::to_string(backbone.scales() * dfs.expert_channels) + ")");
  }
  const std::size_t factor = std::size_t{1} << backbone.scales();
  if (image_size % factor != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " must be divisible by " + std::to_string(factor));
  }
  if (image_size % rsr.grid_rows != 0 || image_size % rsr.grid_cols != 0) {
    throw ConfigError("rsr grid does not tile the image size");
  }
  if (classes == 0) throw ConfigError("need at least one class");
}

RsdetModel::RsdetModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  // Each component draws from its own stream so that toggling one
  // ablation switch does not shift the initialisation of the others.
  Rng rng_rsr(derive_seed(cfg_.seed, 1)), rng_spec(derive_seed(cfg_.seed, 2)), rng_shared(derive_seed(cfg_.seed, 3)),
      rng_dfs(derive_seed(cfg_.seed, 4)), rng_head(derive_seed(cfg_.seed, 5));
  if (cfg_.use_rsr) {
    encoder_v_ = ImportanceEncoder(store_, "rsr.rgb.encoder", cfg_.rsr, rng_rsr);
    encoder_i_ = ImportanceEncoder(store_, "rsr.ir.encoder", cfg_.rsr, rng_rsr);
  }
  specific_v_ = SpecificExtractor(store_, "backbone.rgb", 3, cfg_.backbone, rng_spec);
  specific_i_ = SpecificExtractor(store_, "backbone.ir", 1, cfg_.backbone, rng_spec);
  shared_ = SharedExtractor(store_, "backbone.shared", cfg_.backbone, rng_shared);
  DfsConfig dfs = cfg_.dfs;
  dfs.gating = cfg_.use_dfs;
  dfs_ = DynamicFeatureSelection(store_, "dfs", cfg_.backbone, dfs, rng_dfs);
  head_ = DetectionHead(store_, "head", cfg_.backbone.shared_channels, cfg_.classes, rng_head);
}

ForwardResult RsdetModel::forward(const Tensor& image_v, const Tensor& image_i) const {
  if (image_v.rank() != 3 || image_i.rank() != 3 || image_v.dim(0) != 3 || image_i.dim(0) != 1 ||
      image_v.dim(1) != cfg_.image_size || image_v.dim(2) != cfg_.image_size ||
      image_i.dim(1) != cfg_.image_size || image_i.dim(2) != cfg_.image_size) {
    throw DimensionError("forward expects RGB [3,S,S] and IR [1,S,S] with S=" + std::to_string(cfg_.image_size) +
                         ", got " + shape_str(image_v.dims()) + " and " + shape_str(image_i.dims()));
  }
  ForwardResult r;
  Tensor net_v = standardize(image_v, kRgbMean, kRgbStd, false);
  Tensor net_i = standardize(image_i, kIrMean, kIrStd, false);
  if (cfg_.use_rsr) {
    auto rv = apply_rsr(net_v, encoder_v_, cfg_.rsr);
    auto ri = apply_rsr(net_i, encoder_i_, cfg_.rsr);
    net_v = rv.cleaned;
    net_i = ri.cleaned;
    r.cleaned_v = standardize(net_v, kRgbMean, kRgbStd, true);
    r.cleaned_i = standardize(net_i, kIrMean, kIrStd, true);
    r.filters = {std::move(rv.filter), std::move(ri.filter)};
  } else {
    r.cleaned_v = image_v;
    r.cleaned_i = image_i;
  }
  const auto feats_v = specific_v_(net_v);
  const auto feats_i = specific_i_(net_i);
  r.shared = shared_(net_v, net_i);
  r.dfs = dfs_(feats_i, feats_v, cfg_.fused_size());
  r.fused = add(r.shared, r.dfs.fused);
  r.head = head_(r.fused);
  return r;
}

StepLoss RsdetModel::loss(const ForwardResult& fwd, const std::vector<Box>& boxes, double gamma) const {
  const auto target = assign_targets(boxes, cfg_.fused_size(), cfg_.image_size, cfg_.classes);
  const auto det = detection_losses(fwd.head, target);
  const auto [l_i, l_v] = shared_specific_losses(fwd.shared, fwd.dfs.specific_i, fwd.dfs.specific_v);
  StepLoss out;
  out.total = total_loss(l_i, l_v, det.objectness, det.regression, det.classification, gamma, &out.report);
  return out;
}

std::vector<Box> RsdetModel::detect(const Tensor& image_v, const Tensor& image_i, double score_threshold,
                                    double nms_iou) const {
  NoGradGuard no_grad;
  const auto fwd = forward(image_v, image_i);
  return decode(fwd.head, cfg_.image_size, score_threshold, nms_iou);
}

}  // namespace cffuse
