#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cffuse/backbone.hpp"
#include "cffuse/layers.hpp"

namespace cffuse {

struct DfsConfig {
  /// Router threshold t, must lie in (0, 0.5].
  double threshold = 0.3;
  std::size_t expert_channels = 8;
  /// Train-time surrogate gradient for the binary gates.
  bool straight_through = true;
  /// When false the module degrades to plain feature addition per scale
  /// (no gating network, no router).
  bool gating = true;

  void validate() const;
};

/// Gate weights and router output for one scale.
struct GateDecision {
  std::size_t scale = 0;
  double w_i = 0.5;
  double w_v = 0.5;
  int r_i = 1;
  int r_v = 1;
};

/// Three-case threshold router. A weight equal to t counts as passing.
/// Throws ConfigError for t outside (0, 0.5].
std::pair<int, int> route(double w_i, double w_v, double t);

/// Softmax([gap(x_i), gap(x_v)] . weight) for weight [2M, 2]; returns [2]
/// holding (w_i, w_v).
Tensor gate(const Tensor& feats_i, const Tensor& feats_v, const Tensor& weight);

/// Two conv blocks projecting a scale's features to a common width.
class Expert {
 public:
  Expert() = default;
  Expert(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return second_(first_(x)); }

 private:
  ConvBlock first_, second_;
};

/// Multiplies `x` by the gate (a one-element tensor) and runs the expert.
Tensor expert_apply(const Tensor& x, const Tensor& gate_value, const Expert& expert);

/// Per scale: w_i * c_i + w_v * c_v, resized to size x size, then
/// concatenated over scales along channels.
Tensor fuse(const std::vector<Tensor>& weights_i, const std::vector<Tensor>& weights_v,
            const std::vector<Tensor>& experts_i, const std::vector<Tensor>& experts_v, std::size_t size);

struct DfsOutput {
  Tensor fused;                       // C_spe, [N * C_e, S, S]
  std::vector<GateDecision> decisions;
  std::vector<Tensor> experts_i;      // per scale, native resolution
  std::vector<Tensor> experts_v;
  Tensor specific_i;                  // expert outputs of one modality, resized and concatenated
  Tensor specific_v;
};

class DynamicFeatureSelection {
 public:
  DynamicFeatureSelection() = default;
  DynamicFeatureSelection(ParamStore& store, const std::string& prefix, const BackboneConfig& backbone,
                          const DfsConfig& cfg, Rng& rng);

  DfsOutput operator()(const ScaleFeatureSet& ir, const ScaleFeatureSet& rgb, std::size_t size) const;

  const DfsConfig& config() const { return cfg_; }

 private:
  DfsConfig cfg_;
  std::vector<Tensor> gate_weights_;
  std::vector<Expert> experts_i_, experts_v_;
};

}  // namespace cffuse
