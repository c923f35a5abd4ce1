#pragma once

#include <utility>

#include "cffuse/tensor.hpp"

namespace cffuse {

/// softmax(flatten(x)): strictly positive, sums to one.
Tensor feature_distribution(const Tensor& x);

/// -sum p log q
Tensor cross_entropy(const Tensor& p, const Tensor& q);
/// sum p log(p / q)
Tensor kl_divergence(const Tensor& p, const Tensor& q);
/// -sum p log p
Tensor entropy(const Tensor& p);

/// CE(p,q) - KL(p||q) + CE(q,p) - KL(q||p).
///
/// Algebraically this equals H(p) + H(q); it is evaluated term by term.
/// Throws NumericError unless both inputs are strictly positive and sum to
/// one within 1e-9.
Tensor mi_surrogate(const Tensor& p, const Tensor& q);

/// Loss terms for the shared/specific supervision. Each is the negated
/// surrogate between the pooled shared feature and one pooled specific
/// feature, so minimising the loss maximises the surrogate.
std::pair<Tensor, Tensor> shared_specific_losses(const Tensor& shared, const Tensor& specific_i,
                                                 const Tensor& specific_v);

struct LossReport {
  double l_i_spe = 0.0;
  double l_v_spe = 0.0;
  double l_det_cls = 0.0;
  double l_det_reg = 0.0;
  double l_det_obj = 0.0;
  double total = 0.0;
  double gamma = 0.001;
};

inline constexpr double kDefaultGamma = 0.001;

/// gamma * (l_i_spe + l_v_spe) + l_obj + l_reg + l_cls. Fills `report`
/// when given.
Tensor total_loss(const Tensor& l_i_spe, const Tensor& l_v_spe, const Tensor& l_obj, const Tensor& l_reg,
                  const Tensor& l_cls, double gamma = kDefaultGamma, LossReport* report = nullptr);

}  // namespace cffuse
