#pragma once

#include <string>

#include "cffuse/params.hpp"
#include "cffuse/tensor.hpp"

namespace cffuse {

/// Same-padded odd-kernel convolution with bias.
struct Conv2d {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  std::size_t pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Whole-sample normalisation with per-channel gain and bias.
struct Norm {
  Tensor gain, bias;

  Norm() = default;
  Norm(ParamStore& store, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x) const;
};

/// conv -> norm -> SiLU
struct ConvBlock {
  Conv2d conv;
  Norm norm;

  ConvBlock() = default;
  ConvBlock(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Halves the spatial size (2x2 average pool), then
/// silu(norm(conv(silu(norm(conv(x))))) + proj(x)), where proj is a 1x1
/// convolution when the channel count changes.
struct DownResBlock {
  ConvBlock first;
  Conv2d second;
  Norm second_norm;
  Conv2d proj;
  bool has_proj = false;

  DownResBlock() = default;
  DownResBlock(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace cffuse
