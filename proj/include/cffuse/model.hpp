#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cffuse/backbone.hpp"
#include "cffuse/detect.hpp"
#include "cffuse/dfs.hpp"
#include "cffuse/losses.hpp"
#include "cffuse/rsr.hpp"

namespace cffuse {

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t classes = 2;
  RsrConfig rsr;
  BackboneConfig backbone;
  DfsConfig dfs;
  /// Ablation switches. Without RSR the images pass through unchanged;
  /// without DFS each scale is fused by plain addition.
  bool use_rsr = true;
  bool use_dfs = true;
  std::uint64_t seed = 1;

  /// Spatial size of the fused feature (the second scale).
  std::size_t fused_size() const { return image_size / 4; }
  void validate() const;
};

/// Everything a forward pass produces, for inspection and losses.
struct ForwardResult {
  Tensor cleaned_v, cleaned_i;  // pixel space; the network sees them standardised
  std::vector<SpectralFilter> filters;  // {rgb, ir} when RSR is on
  Tensor shared;                        // C_sha
  DfsOutput dfs;                        // C_spe and per-scale expert outputs
  Tensor fused;                         // C = C_sha + C_spe
  HeadOutput head;
};

struct StepLoss {
  Tensor total;
  LossReport report;
};

/// The toy detector: RSR -> specific/shared backbone -> DFS -> head.
class RsdetModel {
 public:
  explicit RsdetModel(ModelConfig cfg);

  RsdetModel(const RsdetModel&) = delete;
  RsdetModel& operator=(const RsdetModel&) = delete;
  RsdetModel(RsdetModel&&) = default;
  RsdetModel& operator=(RsdetModel&&) = default;

  /// Full coarse-to-fine pass on one RGB[3,H,W] / IR[1,H,W] pair.
  ForwardResult forward(const Tensor& image_v, const Tensor& image_i) const;

  /// Objective for one annotated pair under weight `gamma`.
  StepLoss loss(const ForwardResult& fwd, const std::vector<Box>& boxes, double gamma) const;

  std::vector<Box> detect(const Tensor& image_v, const Tensor& image_i, double score_threshold = 0.05,
                          double nms_iou = 0.5) const;

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  ImportanceEncoder encoder_v_, encoder_i_;
  SpecificExtractor specific_v_, specific_i_;
  SharedExtractor shared_;
  DynamicFeatureSelection dfs_;
  DetectionHead head_;
};

}  // namespace cffuse
