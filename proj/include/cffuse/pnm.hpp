#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cffuse/tensor.hpp"

namespace cffuse {

/// 8-bit interleaved raster: 1 channel (PGM) or 3 channels (PPM).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary P5/P6 with maxval 255. Errors name the path and byte offset.
Image8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image8& image);

/// [C,H,W] in [0,1] (values clamped) -> 8-bit, rounding to nearest.
Image8 to_image8(const Tensor& planar);
/// 8-bit -> [C,H,W] with values k / 255.
Tensor from_image8(const Image8& image);

/// Linearly stretches a single plane to [0, 1] for display.
Tensor normalize_for_display(const Tensor& plane);

}  // namespace cffuse
