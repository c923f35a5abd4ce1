#pragma once

#include <string>
#include <vector>

#include "cffuse/layers.hpp"

namespace cffuse {

struct BackboneConfig {
  std::size_t stem_channels = 16;
  std::vector<std::size_t> scale_channels{16, 32, 64, 128};
  /// Residual blocks in the shared encoder; its output is H / 2^n wide.
  std::size_t shared_blocks = 2;
  std::size_t shared_channels = 32;

  std::size_t scales() const { return scale_channels.size(); }
};

/// Multi-scale modality-specific features; scale i is 2^(i+1) times
/// smaller than the input.
struct ScaleFeatureSet {
  std::vector<Tensor> scales;
};

/// Stem plus one downsampling residual block per scale. One instance per
/// modality; no parameters are shared between instances.
class SpecificExtractor {
 public:
  SpecificExtractor() = default;
  SpecificExtractor(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                    const BackboneConfig& cfg, Rng& rng);

  /// Throws DimensionError unless H and W are divisible by 2^scales.
  ScaleFeatureSet operator()(const Tensor& image) const;

 private:
  std::size_t in_channels_ = 0;
  ConvBlock stem_;
  std::vector<DownResBlock> blocks_;
};

/// Weight-tied encoder applied to the channel mean of each modality; the
/// two encodings are averaged and projected to `shared_channels`.
class SharedExtractor {
 public:
  SharedExtractor() = default;
  SharedExtractor(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg, Rng& rng);

  Tensor operator()(const Tensor& image_v, const Tensor& image_i) const;
  /// Projection of a single image's encoding.
  Tensor encode_single(const Tensor& image) const;

 private:
  Tensor encode(const Tensor& image) const;

  ConvBlock stem_;
  std::vector<DownResBlock> blocks_;
  Conv2d project_;
};

}  // namespace cffuse
