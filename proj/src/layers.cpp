#include "cffuse/layers.hpp"

#include "cffuse/ops.hpp"

namespace cffuse {

Conv2d::Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng)
    : pad(k / 2) {
  weight = store.add_kaiming(name + ".w", {out, in, k, k}, in * k * k, rng);
  bias = store.add_constant(name + ".b", {out}, 0.0);
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight, bias, 1, pad); }

Norm::Norm(ParamStore& store, const std::string& name, std::size_t channels) {
  gain = store.add_constant(name + ".gain", {channels}, 1.0);
  bias = store.add_constant(name + ".bias", {channels}, 0.0);
}

Tensor Norm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

ConvBlock::ConvBlock(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                     Rng& rng)
    : conv(store, name + ".conv", in, out, k, rng), norm(store, name + ".norm", out) {}

Tensor ConvBlock::operator()(const Tensor& x) const { return silu(norm(conv(x))); }

DownResBlock::DownResBlock(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : first(store, name + ".block1", in, out, 3, rng),
      second(store, name + ".conv2", out, out, 3, rng),
      second_norm(store, name + ".norm2", out),
      has_proj(in != out) {
  if (has_proj) proj = Conv2d(store, name + ".proj", in, out, 1, rng);
}

Tensor DownResBlock::operator()(const Tensor& x) const {
  const Tensor pooled = avgpool2d(x, 2);
  const Tensor body = second_norm(second(first(pooled)));
  const Tensor skip = has_proj ? proj(pooled) : pooled;
  return silu(add(body, skip));
}

}  // namespace cffuse
