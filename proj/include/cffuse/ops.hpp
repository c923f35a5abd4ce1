#pragma once

#include <optional>
#include <vector>

#include "cffuse/tensor.hpp"

namespace cffuse {

// Elementwise arithmetic. Operands must have equal shapes, or one of them
// must hold a single element (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor exp(const Tensor& x);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& x);
Tensor log1p(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// x * sigmoid(x)
Tensor silu(const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);
/// Huber-style elementwise penalty with unit transition point.
Tensor smooth_l1(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Same values, new dims (element count must match).
Tensor reshape(const Tensor& x, Shape dims);
Tensor flatten(const Tensor& x);

/// Concatenates along the leading axis; trailing dims must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, begin + count) of the leading axis.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t count);

/// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Cross-correlation of x[C,H,W] with k[O,C,kh,kw] (+ bias[O]).
Tensor conv2d(const Tensor& x, const Tensor& k, const std::optional<Tensor>& bias,
              std::size_t stride = 1, std::size_t pad = 0);

/// Mean over non-overlapping (wh x ww) windows of x[C,H,W].
Tensor avgpool2d(const Tensor& x, std::size_t wh, std::size_t ww);
inline Tensor avgpool2d(const Tensor& x, std::size_t window) { return avgpool2d(x, window, window); }
/// x[C,H,W] -> [C]
Tensor global_avgpool(const Tensor& x);
/// x[C,H,W] -> [1,H,W]
Tensor channel_mean(const Tensor& x);

/// Nearest-neighbour resampling of x[C,H,W] to [C,out_h,out_w]; source
/// index is floor(dst * in / out).
Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Normalises each sample of x[C,H,W] over all its elements, then applies
/// a per-channel affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Forward emits `hard`, backward passes the incoming gradient to `soft`
/// unchanged.
Tensor straight_through(const Tensor& soft, std::vector<double> hard);

/// Elements where keep[i] is set become exactly 1 (no gradient); others
/// pass through.
Tensor keep_ones(const Tensor& x, const std::vector<bool>& keep);

}  // namespace cffuse
