#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cffuse/box.hpp"
#include "cffuse/tensor.hpp"

namespace cffuse {

enum class Regime { Day, Night };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& text);

enum class NoiseKind { Off, Checkerboard, Stripes, Mixed };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

/// Redundant background noise injected into both modalities.
struct NoiseProfile {
  NoiseKind kind = NoiseKind::Mixed;
  /// Peak amplitude of the structured (checkerboard / stripe) pattern.
  double structured = 0.12;
  /// Standard deviation of per-pixel sensor noise; the night regime
  /// raises it for RGB.
  double sensor = 0.02;
};

/// Paired RGB/IR scene with noise-free references.
struct Scene {
  Tensor image_v;  // [3,H,W]
  Tensor image_i;  // [1,H,W]
  Tensor clean_v;
  Tensor clean_i;
  std::vector<Box> boxes;  // class 0 rectangle, class 1 ellipse
  std::uint64_t seed = 0;
  Regime regime = Regime::Day;
};

inline constexpr std::size_t kSceneClasses = 2;

/// Renders a scene. H and W must be powers of two >= 32.
Scene generate(std::uint64_t seed, std::size_t height, std::size_t width, Regime regime, std::size_t n_objects,
               const NoiseProfile& noise);

struct CorpusSpec {
  std::uint64_t seed = 7;
  std::size_t count = 200;
  std::size_t size = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  double night_fraction = 0.5;
  NoiseProfile noise;
};

/// Scene k uses seed derive_seed(spec.seed, k); regime and object count
/// are drawn from that seed.
std::vector<Scene> generate_corpus(const CorpusSpec& spec);

/// Rounds every image to the 8-bit grid used on disk.
Scene quantize(const Scene& scene);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// First round(train_fraction * count) indices train, the rest test.
Split split_by_index(std::size_t count, double train_fraction = 0.8);

/// Writes scene_NNNNN_{rgb,ir}[_clean].{ppm,pgm}, boxes.csv and scenes.csv.
void write_corpus(const std::string& dir, const std::vector<Scene>& scenes);
/// Reads and validates a corpus written by write_corpus.
std::vector<Scene> read_corpus(const std::string& dir);

/// Mean absolute difference between object pixels and background pixels
/// of the clean RGB image (luma).
double rgb_object_contrast(const Scene& scene);

/// 1 inside any box-shaped object footprint, 0 elsewhere, [H,W].
std::vector<std::uint8_t> object_mask(const Scene& scene);

}  // namespace cffuse
