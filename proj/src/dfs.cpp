#include "cffuse/dfs.hpp"

#include "cffuse/ops.hpp"
#include "cffuse/rsr.hpp"

namespace cffuse {

void DfsConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 0.5)) {
    throw ConfigError("router threshold must lie in (0, 0.5], got " + std::to_string(threshold));
  }
  if (expert_channels == 0) throw ConfigError("expert width must be positive");
}

std::pair<int, int> route(double w_i, double w_v, double t) {
  if (!(t > 0.0 && t <= 0.5)) throw ConfigError("router threshold must lie in (0, 0.5], got " + std::to_string(t));
  int r_i = w_i >= t ? 1 : 0;
  int r_v = w_v >= t ? 1 : 0;
  // Unreachable for a normalised pair unless rounding pushes both just
  // below t = 0.5; keep the heavier branch open.
  if (r_i == 0 && r_v == 0) {
    r_i = w_i >= w_v ? 1 : 0;
    r_v = w_v >= w_i ? 1 : 0;
  }
  return {r_i, r_v};
}

Tensor gate(const Tensor& feats_i, const Tensor& feats_v, const Tensor& weight) {
  const Tensor xi = global_avgpool(feats_i);
  const Tensor xv = global_avgpool(feats_v);
  if (xi.numel() != xv.numel() || weight.rank() != 2 || weight.dim(0) != 2 * xi.numel() || weight.dim(1) != 2) {
    throw DimensionError("gate: pooled lengths " + std::to_string(xi.numel()) + "/" + std::to_string(xv.numel()) +
                         " do not match weight " + shape_str(weight.dims()));
  }
  const Tensor joint = reshape(concat({xi, xv}), {1, 2 * xi.numel()});
  return reshape(softmax(matmul(joint, weight), 1), {2});
}

Expert::Expert(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : first_(store, prefix + ".block1", in, out, 3, rng), second_(store, prefix + ".block2", out, out, 3, rng) {}

Tensor expert_apply(const Tensor& x, const Tensor& gate_value, const Expert& expert) {
  return expert(mul(x, gate_value));
}

Tensor fuse(const std::vector<Tensor>& weights_i, const std::vector<Tensor>& weights_v,
            const std::vector<Tensor>& experts_i, const std::vector<Tensor>& experts_v, std::size_t size) {
  const std::size_t n = experts_i.size();
  if (weights_i.size() != n || weights_v.size() != n || experts_v.size() != n || n == 0) {
    throw DimensionError("fuse: need matching non-empty per-scale lists");
  }
  std::vector<Tensor> parts;
  parts.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor mixed = add(mul(experts_i[s], weights_i[s]), mul(experts_v[s], weights_v[s]));
    parts.push_back(resize_nearest(mixed, size, size));
  }
  return concat(parts);
}

DynamicFeatureSelection::DynamicFeatureSelection(ParamStore& store, const std::string& prefix,
                                                 const BackboneConfig& backbone, const DfsConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t s = 0; s < backbone.scales(); ++s) {
    const std::size_t ch = backbone.scale_channels[s];
    const std::string tag = std::to_string(s);
    if (cfg_.gating) gate_weights_.push_back(store.add_kaiming(prefix + ".gate" + tag, {2 * ch, 2}, 2 * ch, rng));
    experts_i_.emplace_back(store, prefix + ".expert_ir" + tag, ch, cfg_.expert_channels, rng);
    experts_v_.emplace_back(store, prefix + ".expert_rgb" + tag, ch, cfg_.expert_channels, rng);
  }
}

DfsOutput DynamicFeatureSelection::operator()(const ScaleFeatureSet& ir, const ScaleFeatureSet& rgb,
                                              std::size_t size) const {
  const std::size_t n = experts_i_.size();
  if (ir.scales.size() != n || rgb.scales.size() != n) {
    throw DimensionError("dfs: expected " + std::to_string(n) + " scales per modality");
  }
  DfsOutput out;
  std::vector<Tensor> wi(n), wv(n);
  for (std::size_t s = 0; s < n; ++s) {
    GateDecision d;
    d.scale = s;
    Tensor gi, gv;
    if (cfg_.gating) {
      const Tensor w = gate(ir.scales[s], rgb.scales[s], gate_weights_[s]);
      wi[s] = slice(w, 0, 1);
      wv[s] = slice(w, 1, 1);
      d.w_i = w[0];
      d.w_v = w[1];
      std::tie(d.r_i, d.r_v) = route(d.w_i, d.w_v, cfg_.threshold);
      if (cfg_.straight_through) {
        gi = straight_through(wi[s], {static_cast<double>(d.r_i)});
        gv = straight_through(wv[s], {static_cast<double>(d.r_v)});
      } else {
        gi = Tensor::scalar(d.r_i);
        gv = Tensor::scalar(d.r_v);
      }
    } else {
      d.w_i = d.w_v = 1.0;
      wi[s] = wv[s] = gi = gv = Tensor::scalar(1.0);
    }
    out.experts_i.push_back(expert_apply(ir.scales[s], gi, experts_i_[s]));
    out.experts_v.push_back(expert_apply(rgb.scales[s], gv, experts_v_[s]));
    out.decisions.push_back(d);
  }
  out.fused = fuse(wi, wv, out.experts_i, out.experts_v, size);
  std::vector<Tensor> si, sv;
  for (std::size_t s = 0; s < n; ++s) {
    si.push_back(resize_nearest(out.experts_i[s], size, size));
    sv.push_back(resize_nearest(out.experts_v[s], size, size));
  }
  out.specific_i = concat(si);
  out.specific_v = concat(sv);
  return out;
}

}  // namespace cffuse
