#include "cffuse/backbone.hpp"

#include "cffuse/ops.hpp"

namespace cffuse {

SpecificExtractor::SpecificExtractor(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                                     const BackboneConfig& cfg, Rng& rng)
    : in_channels_(in_channels), stem_(store, prefix + ".stem", in_channels, cfg.stem_channels, 3, rng) {
  std::size_t in = cfg.stem_channels;
  for (std::size_t i = 0; i < cfg.scales(); ++i) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), in, cfg.scale_channels[i], rng);
    in = cfg.scale_channels[i];
  }
}

ScaleFeatureSet SpecificExtractor::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != in_channels_) {
    throw DimensionError("specific extractor expects [" + std::to_string(in_channels_) + ",H,W], got " +
                         shape_str(image.dims()));
  }
  const std::size_t factor = std::size_t{1} << blocks_.size();
  if (image.dim(1) % factor != 0 || image.dim(2) % factor != 0) {
    throw DimensionError("specific extractor: spatial dims of " + shape_str(image.dims()) + " not divisible by " +
                         std::to_string(factor));
  }
  ScaleFeatureSet out;
  Tensor x = stem_(image);
  for (const auto& block : blocks_) {
    x = block(x);
    out.scales.push_back(x);
  }
  return out;
}

SharedExtractor::SharedExtractor(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg, Rng& rng)
    : stem_(store, prefix + ".stem", 1, cfg.stem_channels, 3, rng) {
  std::size_t in = cfg.stem_channels;
  for (std::size_t i = 0; i < cfg.shared_blocks; ++i) {
    const std::size_t out = cfg.scale_channels.at(i);
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), in, out, rng);
    in = out;
  }
  project_ = Conv2d(store, prefix + ".project", in, cfg.shared_channels, 1, rng);
}

Tensor SharedExtractor::encode(const Tensor& image) const {
  const std::size_t factor = std::size_t{1} << blocks_.size();
  if (image.rank() != 3 || image.dim(1) % factor != 0 || image.dim(2) % factor != 0) {
    throw DimensionError("shared extractor: bad input " + shape_str(image.dims()));
  }
  Tensor x = stem_(channel_mean(image));
  for (const auto& block : blocks_) x = block(x);
  return x;
}

Tensor SharedExtractor::operator()(const Tensor& image_v, const Tensor& image_i) const {
  if (image_v.rank() != 3 || image_i.rank() != 3 || image_v.dim(1) != image_i.dim(1) ||
      image_v.dim(2) != image_i.dim(2)) {
    throw DimensionError("shared extractor: spatial mismatch " + shape_str(image_v.dims()) + " vs " +
                         shape_str(image_i.dims()));
  }
  return project_(scale(add(encode(image_v), encode(image_i)), 0.5));
}

Tensor SharedExtractor::encode_single(const Tensor& image) const { return project_(encode(image)); }

}  // namespace cffuse
