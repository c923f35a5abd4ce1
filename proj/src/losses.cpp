#include "cffuse/losses.hpp"

#include <cmath>
#include <string>

#include "cffuse/ops.hpp"

namespace cffuse {

namespace {

void check_distribution(const Tensor& p, const char* name) {
  double total = 0.0;
  for (double v : p.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw NumericError(std::string("mi_surrogate: ") + name + " has a non-positive entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError(std::string("mi_surrogate: ") + name + " sums to " + std::to_string(total));
  }
}

}  // namespace

Tensor feature_distribution(const Tensor& x) { return softmax(flatten(x), 0); }

Tensor cross_entropy(const Tensor& p, const Tensor& q) { return neg(sum(mul(p, log(q)))); }

Tensor kl_divergence(const Tensor& p, const Tensor& q) { return sum(mul(p, sub(log(p), log(q)))); }

Tensor entropy(const Tensor& p) { return neg(sum(mul(p, log(p)))); }

Tensor mi_surrogate(const Tensor& p, const Tensor& q) {
  if (p.dims() != q.dims()) {
    throw DimensionError("mi_surrogate: " + shape_str(p.dims()) + " vs " + shape_str(q.dims()));
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  const Tensor forward = sub(cross_entropy(p, q), kl_divergence(p, q));
  const Tensor backward = sub(cross_entropy(q, p), kl_divergence(q, p));
  return add(forward, backward);
}

std::pair<Tensor, Tensor> shared_specific_losses(const Tensor& shared, const Tensor& specific_i,
                                                 const Tensor& specific_v) {
  const Tensor ps = feature_distribution(global_avgpool(shared));
  const Tensor pi = feature_distribution(global_avgpool(specific_i));
  const Tensor pv = feature_distribution(global_avgpool(specific_v));
  return {neg(mi_surrogate(ps, pi)), neg(mi_surrogate(ps, pv))};
}

Tensor total_loss(const Tensor& l_i_spe, const Tensor& l_v_spe, const Tensor& l_obj, const Tensor& l_reg,
                  const Tensor& l_cls, double gamma, LossReport* report) {
  const Tensor detection = add(add(l_obj, l_reg), l_cls);
  Tensor total = add(scale(add(l_i_spe, l_v_spe), gamma), detection);
  if (report) {
    report->l_i_spe = l_i_spe.item();
    report->l_v_spe = l_v_spe.item();
    report->l_det_obj = l_obj.item();
    report->l_det_reg = l_reg.item();
    report->l_det_cls = l_cls.item();
    report->gamma = gamma;
    report->total = total.item();
  }
  if (!std::isfinite(total.item())) throw NumericError("total loss is not finite");
  return total;
}

}  // namespace cffuse
