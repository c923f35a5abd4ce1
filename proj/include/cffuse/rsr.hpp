#pragma once

#include <span>
#include <string>
#include <vector>

#include "cffuse/params.hpp"
#include "cffuse/tensor.hpp"

namespace cffuse {

enum class FilterMode { Soft, Hard };

std::string to_string(FilterMode mode);
FilterMode parse_filter_mode(const std::string& text);

/// Partition of an H x W spectrum into rows x cols equal patches.
struct PatchGrid {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;

  std::size_t count() const { return rows * cols; }

  /// Throws DimensionError if the grid does not tile the image exactly.
  static PatchGrid for_image(std::size_t rows, std::size_t cols, std::size_t height, std::size_t width);
};

/// Frequency-domain mask shared by all channels of one modality.
struct SpectralFilter {
  PatchGrid grid;
  Tensor values;  // [H, W], each entry in [0, 1], constant over a patch
  FilterMode mode = FilterMode::Soft;
  std::size_t k = 0;
  std::vector<std::size_t> selected;  // top-K patch indices, row-major
};

enum class EncoderKind {
  Dense,      // patch means -> m -> 2m -> m fully connected
  Patchwise,  // the same small MLP applied to each patch independently
};

struct RsrConfig {
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  std::size_t k = 51;
  FilterMode mode = FilterMode::Soft;
  EncoderKind encoder = EncoderKind::Dense;
  std::size_t patchwise_hidden = 8;
  /// Training-time surrogate gradient for the hard mask.
  bool straight_through = true;

  std::size_t patch_count() const { return grid_rows * grid_cols; }
  /// Throws ConfigError unless 1 <= k <= rows * cols.
  void validate() const;
};

/// Filter-prediction network for one modality.
class ImportanceEncoder {
 public:
  ImportanceEncoder() = default;
  ImportanceEncoder(ParamStore& store, const std::string& prefix, const RsrConfig& cfg, Rng& rng);

  /// amp[1,H,W] -> one logit per patch, row-major, [m].
  Tensor operator()(const Tensor& amp) const;

  EncoderKind kind() const { return kind_; }

 private:
  EncoderKind kind_ = EncoderKind::Dense;
  std::size_t rows_ = 0, cols_ = 0;
  Tensor w1_, b1_, w2_, b2_;
};

/// Indices of the k largest logits; ties go to the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> logits, std::size_t k);

/// Top-K positions become exactly 1; the rest become 0 (hard) or
/// sigmoid(logit) (soft). With `straight_through`, hard mode backpropagates
/// as the soft mask would.
Tensor topk_filter(const Tensor& logits, std::size_t k, FilterMode mode, bool straight_through = true);

/// Nearest-neighbour expansion of a per-patch mask[m] to the full [H,W] grid.
SpectralFilter expand_filter(const Tensor& mask, const PatchGrid& grid);

struct RsrOutput {
  Tensor cleaned;  // [C,H,W]
  SpectralFilter filter;
  Tensor logits;  // [m]
};

/// Predicts a filter from the channel-mean amplitude of `image`, applies
/// it to the spectrum and returns to the spatial domain.
RsrOutput apply_rsr(const Tensor& image, const ImportanceEncoder& encoder, const RsrConfig& cfg);

}  // namespace cffuse
