#include "cffuse/spectral.hpp"

#include <cmath>
#include <numbers>

namespace cffuse {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(cd* a, std::size_t n, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const cd w(std::cos(ang), std::sin(ang));
      for (std::size_t i = 0; i < n; i += len) {
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void dft_naive(cd* a, std::size_t n, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc{};
    for (std::size_t j = 0; j < n; ++j) {
      // reduce k*j mod n first to keep the angle small
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += a[j] * cd(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), a);
}

// Transforms every channel plane of `planes` (C*H*W complex values) in place.
void transform2(std::vector<cd>& planes, std::size_t c, std::size_t h, std::size_t w, bool inverse) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    cd* base = planes.data() + ci * h * w;
    for (std::size_t r = 0; r < h; ++r) dft1(base + r * w, w, 1, inverse);
    for (std::size_t col = 0; col < w; ++col) dft1(base + col, h, w, inverse);
  }
}

std::vector<cd> to_complex(const Tensor& image) {
  std::vector<cd> out(image.numel());
  const auto v = image.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cd(v[i], 0.0);
  return out;
}

void check_image(const Tensor& image, const char* op) {
  if (image.rank() != 3) throw DimensionError(std::string(op) + ": expected [C,H,W], got " + shape_str(image.dims()));
}

}  // namespace

void dft1(std::complex<double>* data, std::size_t n, std::size_t stride, bool inverse) {
  if (n <= 1) return;
  if (stride == 1) {
    if (is_pow2(n)) {
      fft_radix2(data, n, inverse);
    } else {
      dft_naive(data, n, inverse);
    }
    return;
  }
  std::vector<cd> tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = data[i * stride];
  dft1(tmp.data(), n, 1, inverse);
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = tmp[i];
}

ComplexSpectrum dft2(const Tensor& image) {
  check_image(image, "dft2");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto planes = to_complex(image);
  transform2(planes, c, h, w, false);
  ComplexSpectrum spec(c, h, w);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    spec.re[i] = planes[i].real();
    spec.im[i] = planes[i].imag();
  }
  return spec;
}

namespace {

std::vector<cd> inverse_planes(const ComplexSpectrum& spec) {
  if (spec.re.size() != spec.channels * spec.height * spec.width || spec.im.size() != spec.re.size()) {
    throw DimensionError("idft2: malformed spectrum");
  }
  std::vector<cd> planes(spec.size());
  for (std::size_t i = 0; i < planes.size(); ++i) planes[i] = cd(spec.re[i], spec.im[i]);
  transform2(planes, spec.channels, spec.height, spec.width, true);
  const double inv = 1.0 / static_cast<double>(spec.height * spec.width);
  for (auto& z : planes) z *= inv;
  return planes;
}

}  // namespace

Tensor idft2(const ComplexSpectrum& spec, double imag_tolerance) {
  const auto planes = inverse_planes(spec);
  std::vector<double> out(planes.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    out[i] = planes[i].real();
    worst = std::max(worst, std::abs(planes[i].imag()));
  }
  if (worst > imag_tolerance) {
    throw NumericError("idft2: imaginary residue " + std::to_string(worst) + " exceeds " +
                       std::to_string(imag_tolerance));
  }
  return Tensor({spec.channels, spec.height, spec.width}, std::move(out));
}

Tensor idft2_real(const ComplexSpectrum& spec) {
  const auto planes = inverse_planes(spec);
  std::vector<double> out(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i) out[i] = planes[i].real();
  return Tensor({spec.channels, spec.height, spec.width}, std::move(out));
}

Tensor amplitude(const ComplexSpectrum& spec) {
  std::vector<double> out(spec.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(spec.re[i], spec.im[i]);
  return Tensor({spec.channels, spec.height, spec.width}, std::move(out));
}

Tensor mean_amplitude(const ComplexSpectrum& spec) {
  const std::size_t plane = spec.height * spec.width;
  std::vector<double> out(plane, 0.0);
  const double inv = 1.0 / static_cast<double>(spec.channels);
  for (std::size_t c = 0; c < spec.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[i] += std::hypot(spec.re[c * plane + i], spec.im[c * plane + i]) * inv;
  return Tensor({1, spec.height, spec.width}, std::move(out));
}

Tensor amplitude_map(const Tensor& image) {
  check_image(image, "amplitude_map");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), plane = h * w;
  std::vector<cd> spectrum = to_complex(image);
  transform2(spectrum, c, h, w, false);
  const double inv_c = 1.0 / static_cast<double>(c);
  // Unit phasors X/|X|, zero where the bin vanishes.
  auto phase = std::make_shared<std::vector<cd>>(spectrum.size());
  std::vector<double> out(plane, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < plane; ++i) {
      const cd x = spectrum[ci * plane + i];
      const double a = std::abs(x);
      out[i] += a * inv_c;
      (*phase)[ci * plane + i] = a > 0.0 ? x / a : cd(0.0, 0.0);
    }
  }
  return Tensor::make_result({1, h, w}, std::move(out), {image}, [=](detail::TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    // d|X_k|/dx_n = Re(conj(U_k) e^{-i theta_kn}), so the gradient is the
    // real part of the unnormalised inverse transform of g * U.
    std::vector<cd> g(phase->size());
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < plane; ++i) g[ci * plane + i] = (*phase)[ci * plane + i] * (self.grad[i] * inv_c);
    transform2(g, c, h, w, true);
    double* gx = self.parents[0]->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i].real();
  });
}

Tensor spectral_filter(const Tensor& image, const Tensor& mask) {
  check_image(image, "spectral_filter");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), plane = h * w;
  if (mask.numel() != plane || (mask.rank() != 2 && mask.rank() != 3)) {
    throw DimensionError("spectral_filter: mask " + shape_str(mask.dims()) + " does not match image " +
                         shape_str(image.dims()));
  }
  auto spectrum = std::make_shared<std::vector<cd>>(to_complex(image));
  transform2(*spectrum, c, h, w, false);

  const auto m = mask.data();
  std::vector<cd> filtered(*spectrum);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) filtered[ci * plane + i] *= m[i];
  transform2(filtered, c, h, w, true);
  const double inv = 1.0 / static_cast<double>(plane);
  std::vector<double> out(filtered.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = filtered[i].real() * inv;

  return Tensor::make_result(image.dims(), std::move(out), {image, mask}, [=](detail::TensorNode& self) {
    std::vector<cd> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = cd(self.grad[i], 0.0);
    transform2(g, c, h, w, false);
    const auto& mv = self.parents[1]->data;
    if (self.parents[1]->requires_grad) {
      double* gm = self.parents[1]->grad.data();
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i)
          gm[i] += inv * ((*spectrum)[ci * plane + i] * std::conj(g[ci * plane + i])).real();
    }
    if (self.parents[0]->requires_grad) {
      // The operator is self-adjoint: Re(IDFT(DFT(g) * mask)).
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i) g[ci * plane + i] *= mv[i];
      transform2(g, c, h, w, true);
      double* gx = self.parents[0]->grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i].real() * inv;
    }
  });
}

Tensor fftshift(const Tensor& map) {
  const std::size_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  if (map.numel() != h * w) throw DimensionError("fftshift: expected a single plane, got " + shape_str(map.dims()));
  const auto v = map.data();
  std::vector<double> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t x = 0; x < w; ++x) out[((u + h / 2) % h) * w + (x + w / 2) % w] = v[u * w + x];
  return Tensor({h, w}, std::move(out));
}

Tensor shifted_log_amplitude(const ComplexSpectrum& spec) {
  const auto amp = mean_amplitude(spec);
  std::vector<double> v(amp.data().begin(), amp.data().end());
  for (auto& a : v) a = std::log1p(a);
  return fftshift(Tensor({spec.height, spec.width}, std::move(v)));
}

}  // namespace cffuse
