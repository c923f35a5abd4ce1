#pragma once

#include <complex>
#include <vector>

#include "cffuse/tensor.hpp"

namespace cffuse {

/// Per-channel 2D spectrum in unshifted coordinates: bin (u, v) of channel
/// c lives at index (c * H + u) * W + v.
struct ComplexSpectrum {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> re;
  std::vector<double> im;

  ComplexSpectrum() = default;
  ComplexSpectrum(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), re(c * h * w, 0.0), im(c * h * w, 0.0) {}

  std::size_t size() const { return re.size(); }
  std::complex<double> at(std::size_t c, std::size_t u, std::size_t v) const {
    const auto i = (c * height + u) * width + v;
    return {re[i], im[i]};
  }
};

/// In-place 1D transform over `n` strided complex samples. `inverse`
/// flips the exponent sign and does not normalise. Radix-2 when n is a
/// power of two, direct summation otherwise.
void dft1(std::complex<double>* data, std::size_t n, std::size_t stride, bool inverse);

/// Unnormalised forward transform of each channel of image[C,H,W].
ComplexSpectrum dft2(const Tensor& image);

/// 1/(H*W)-normalised inverse. Throws NumericError if the result carries
/// an imaginary residue above `imag_tolerance` (i.e. the spectrum was
/// not conjugate-symmetric).
Tensor idft2(const ComplexSpectrum& spec, double imag_tolerance = 1e-6);

/// Inverse transform keeping only the real part of the result.
Tensor idft2_real(const ComplexSpectrum& spec);

/// Per-bin magnitude, [C,H,W].
Tensor amplitude(const ComplexSpectrum& spec);
/// Magnitude averaged over channels, [1,H,W].
Tensor mean_amplitude(const ComplexSpectrum& spec);

/// Channel-mean DFT magnitude of image[C,H,W] as a differentiable
/// [1,H,W] tensor (the gradient is taken as zero at empty bins).
Tensor amplitude_map(const Tensor& image);

/// Re(IDFT(DFT(image) * mask)) for image[C,H,W] and a real mask[H,W]
/// shared by every channel. Differentiable in both arguments.
Tensor spectral_filter(const Tensor& image, const Tensor& mask);

/// log(1 + |F|) of the channel-mean amplitude with the zero frequency
/// moved to the centre, as a [H,W] tensor for display.
Tensor shifted_log_amplitude(const ComplexSpectrum& spec);
/// Centre-shifts an [H,W] (or [1,H,W]) map for display.
Tensor fftshift(const Tensor& map);

}  // namespace cffuse
