#include "cffuse/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>

namespace cffuse {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Eigen peels unaligned leading elements off vectorized loops, so a product
// over a caller buffer sums in an order that depends on the heap address.
// Products therefore run on Eigen-owned storage, which is always aligned.
RowMat owned(const double* p, Eigen::Index rows, Eigen::Index cols) { return ConstMatMap(p, rows, cols); }

void accumulate(double* dst, const RowMat& m) {
  const double* src = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
}

// Gradient buffer of parent i, or nullptr when it does not participate.
double* pgrad(detail::TensorNode& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad.data() : nullptr;
}

const std::vector<double>& pdata(detail::TensorNode& self, std::size_t i) {
  return self.parents[i]->data;
}

enum class Broadcast { Same, ScalarB, ScalarA };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() == b.dims()) return Broadcast::Same;
  if (b.numel() == 1) return Broadcast::ScalarB;
  if (a.numel() == 1) return Broadcast::ScalarA;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                       shape_str(b.dims()));
}

template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  const auto mode = check_binary(a, b, name);
  const Shape dims = mode == Broadcast::ScalarA ? b.dims() : a.dims();
  const std::size_t n = numel_of(dims);
  const auto av = a.data();
  const auto bv = b.data();
  auto ai = [&](std::size_t i) { return mode == Broadcast::ScalarA ? 0 : i; };
  auto bi = [&](std::size_t i) { return mode == Broadcast::ScalarB ? 0 : i; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ai(i)], bv[bi(i)]);
  return Tensor::make_result(dims, std::move(out), {a, b}, [mode, n, da, db](detail::TensorNode& self) {
    const auto& x = pdata(self, 0);
    const auto& y = pdata(self, 1);
    double* gx = pgrad(self, 0);
    double* gy = pgrad(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ia = mode == Broadcast::ScalarA ? 0 : i;
      const std::size_t ib = mode == Broadcast::ScalarB ? 0 : i;
      const double g = self.grad[i];
      if (gx) gx[ia] += g * da(x[ia], y[ib]);
      if (gy) gy[ib] += g * db(x[ia], y[ib]);
    }
  });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::make_result(x.dims(), std::move(out), {x}, [deriv](detail::TensorNode& self) {
    const auto& xin = pdata(self, 0);
    double* gx = pgrad(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * deriv(xin[i], self.data[i]);
  });
}

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add(const Tensor& a, double b) {
  return unary(a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor log1p(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > -1.0)) throw NumericError("log1p of value <= -1: " + std::to_string(v));
  }
  return unary(
      x, [](double v) { return std::log1p(v); }, [](double v, double) { return 1.0 / (1.0 + v); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor smooth_l1(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        const double a = std::abs(v);
        return a < 1.0 ? 0.5 * v * v : a - 0.5;
      },
      [](double v, double) { return std::abs(v) < 1.0 ? v : (v > 0 ? 1.0 : -1.0); });
}

// Pairwise: halves are summed separately, so n equal terms with n a power
// of two add up without rounding.
static double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 1) return v.empty() ? 0.0 : v[0];
  const std::size_t half = std::bit_floor(v.size() - 1);
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

Tensor sum(const Tensor& x) {
  return Tensor::make_result({1}, {pairwise_sum(x.data())}, {x}, [](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.dims()) + " and " +
                         shape_str(b.dims()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  const RowMat prod = owned(a.data().data(), m, k) * owned(b.data().data(), k, n);
  std::vector<double> out(prod.data(), prod.data() + prod.size());
  return Tensor::make_result({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](detail::TensorNode& self) {
    const RowMat g = owned(self.grad.data(), m, n);
    if (double* ga = pgrad(self, 0)) {
      accumulate(ga, g * owned(pdata(self, 1).data(), k, n).transpose());
    }
    if (double* gb = pgrad(self, 1)) {
      accumulate(gb, owned(pdata(self, 0).data(), m, k).transpose() * g);
    }
  });
}

Tensor reshape(const Tensor& x, Shape dims) {
  if (numel_of(dims) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.dims()) + " as " + shape_str(dims));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(dims), std::move(out), {x}, [](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape tail(parts[0].dims().begin() + 1, parts[0].dims().end());
  std::size_t lead = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    Shape t(p.dims().begin() + 1, p.dims().end());
    if (t != tail) {
      throw DimensionError("concat: trailing dims " + shape_str(p.dims()) + " vs " +
                           shape_str(parts[0].dims()));
    }
    lead += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape dims = parts[0].dims();
  dims[0] = lead;
  return Tensor::make_result(dims, std::move(out), parts, [](detail::TensorNode& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t n = self.parents[i]->data.size();
      if (double* g = pgrad(self, i)) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[offset + j];
      }
      offset += n;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.dim(0) || count == 0) {
    throw DimensionError("slice: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.dims()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape dims = x.dims();
  dims[0] = count;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return Tensor::make_result(dims, std::move(out), {x}, [begin, row](detail::TensorNode& self) {
    double* gx = pgrad(self, 0) + begin * row;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.dims()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        out[base + j * inner] = std::exp(xv[base + j * inner] - mx);
        z += out[base + j * inner];
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return Tensor::make_result(x.dims(), std::move(out), {x}, [outer, inner, len](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& k, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 3 || k.rank() != 4 || k.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: input " + shape_str(x.dims()) + " incompatible with kernel " +
                         shape_str(k.dims()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("conv2d: kernel dims must be odd, got " + shape_str(k.dims()));
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (h + 2 * pad < kh || w + 2 * pad < kw || (h + 2 * pad - kh) % stride != 0 ||
      (w + 2 * pad - kw) % stride != 0) {
    throw DimensionError("conv2d: non-integral output size for input " + shape_str(x.dims()) + ", kernel " +
                         shape_str(k.dims()) + ", stride " + std::to_string(stride) + ", pad " +
                         std::to_string(pad));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != o)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->dims()) + " does not match " + std::to_string(o) +
                         " output channels");
  }
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t rows = c * kh * kw, cols = ho * wo;

  const auto er = static_cast<Eigen::Index>(rows), ec = static_cast<Eigen::Index>(cols);
  auto cols_buf = std::make_shared<RowMat>(RowMat::Zero(er, ec));
  const auto xv = x.data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t a = 0; a < kh; ++a) {
      for (std::size_t b = 0; b < kw; ++b) {
        double* dst = cols_buf->data() + ((ci * kh + a) * kw + b) * cols;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + a) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + b) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * wo + ox] = xv[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }

  const auto eo = static_cast<Eigen::Index>(o);
  const RowMat prod = owned(k.data().data(), eo, er) * *cols_buf;
  std::vector<double> out(prod.data(), prod.data() + prod.size());
  if (bias) {
    const auto bv = bias->data();
    for (std::size_t oi = 0; oi < o; ++oi) {
      for (std::size_t j = 0; j < cols; ++j) out[oi * cols + j] += bv[oi];
    }
  }

  std::vector<Tensor> parents{x, k};
  if (bias) parents.push_back(*bias);
  return Tensor::make_result(
      {o, ho, wo}, std::move(out), parents,
      [=](detail::TensorNode& self) {
        const RowMat g = owned(self.grad.data(), eo, ec);
        if (double* gk = pgrad(self, 1)) accumulate(gk, g * cols_buf->transpose());
        if (self.parents.size() > 2) {
          if (double* gb = pgrad(self, 2)) {
            for (std::size_t oi = 0; oi < o; ++oi) {
              double acc = 0.0;
              for (std::size_t j = 0; j < cols; ++j) acc += self.grad[oi * cols + j];
              gb[oi] += acc;
            }
          }
        }
        if (double* gx = pgrad(self, 0)) {
          const RowMat dcols = owned(pdata(self, 1).data(), eo, er).transpose() * g;
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t a = 0; a < kh; ++a) {
              for (std::size_t b = 0; b < kw; ++b) {
                const double* src = dcols.data() + ((ci * kh + a) * kw + b) * cols;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride + a) - static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + b) - static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    gx[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += src[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor avgpool2d(const Tensor& x, std::size_t wh, std::size_t ww) {
  if (x.rank() != 3) throw DimensionError("avgpool2d: expected [C,H,W], got " + shape_str(x.dims()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (wh == 0 || ww == 0 || h % wh != 0 || w % ww != 0) {
    throw DimensionError("avgpool2d: window " + std::to_string(wh) + "x" + std::to_string(ww) +
                         " does not divide " + shape_str(x.dims()));
  }
  const std::size_t ho = h / wh, wo = w / ww;
  const double inv = 1.0 / static_cast<double>(wh * ww);
  const auto xv = x.data();
  std::vector<double> out(c * ho * wo, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ci * ho + y / wh) * wo + xx / ww] += xv[(ci * h + y) * w + xx] * inv;
  return Tensor::make_result({c, ho, wo}, std::move(out), {x}, [=](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          gx[(ci * h + y) * w + xx] += self.grad[(ci * ho + y / wh) * wo + xx / ww] * inv;
  });
}

Tensor global_avgpool(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("global_avgpool: expected [C,H,W], got " + shape_str(x.dims()));
  return reshape(avgpool2d(x, x.dim(1), x.dim(2)), {x.dim(0)});
}

Tensor channel_mean(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("channel_mean: expected [C,H,W], got " + shape_str(x.dims()));
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const double inv = 1.0 / static_cast<double>(c);
  const auto xv = x.data();
  std::vector<double> out(hw, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) out[i] += xv[ci * hw + i] * inv;
  return Tensor::make_result({1, x.dim(1), x.dim(2)}, std::move(out), {x}, [c, hw, inv](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) gx[ci * hw + i] += self.grad[i] * inv;
  });
}

Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3 || out_h == 0 || out_w == 0) {
    throw DimensionError("resize_nearest: bad request " + shape_str(x.dims()) + " -> " + std::to_string(out_h) +
                         "x" + std::to_string(out_w));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t xx = 0; xx < out_w; ++xx) src[y * out_w + xx] = (y * h / out_h) * w + xx * w / out_w;
  const auto xv = x.data();
  const std::size_t plane = out_h * out_w;
  std::vector<double> out(c * plane);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) out[ci * plane + i] = xv[ci * h * w + src[i]];
  return Tensor::make_result({c, out_h, out_w}, std::move(out), {x}, [=](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < plane; ++i) gx[ci * h * w + src[i]] += self.grad[ci * plane + i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 3 || gain.dims() != Shape{x.dim(0)} || bias.dims() != Shape{x.dim(0)}) {
    throw DimensionError("layer_norm: input " + shape_str(x.dims()) + " with gain " + shape_str(gain.dims()) +
                         " and bias " + shape_str(bias.dims()));
  }
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2), n = x.numel();
  const auto xv = x.data();
  double mu = 0.0;
  for (double v : xv) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : xv) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  auto xhat = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n);
  const auto gv = gain.data();
  const auto bv = bias.data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = ci * plane + i;
      (*xhat)[idx] = (xv[idx] - mu) * inv_std;
      out[idx] = gv[ci] * (*xhat)[idx] + bv[ci];
    }
  }
  return Tensor::make_result(x.dims(), std::move(out), {x, gain, bias}, [=](detail::TensorNode& self) {
    const auto& g = self.grad;
    const auto& gainv = pdata(self, 1);
    if (double* gg = pgrad(self, 1)) {
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i) gg[ci] += g[ci * plane + i] * (*xhat)[ci * plane + i];
    }
    if (double* gb = pgrad(self, 2)) {
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i) gb[ci] += g[ci * plane + i];
    }
    if (double* gx = pgrad(self, 0)) {
      // dxhat = g * gain; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = ci * plane + i;
          const double d = g[idx] * gainv[ci];
          m1 += d;
          m2 += d * (*xhat)[idx];
        }
      }
      m1 /= static_cast<double>(n);
      m2 /= static_cast<double>(n);
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = ci * plane + i;
          gx[idx] += inv_std * (g[idx] * gainv[ci] - m1 - (*xhat)[idx] * m2);
        }
      }
    }
  });
}

Tensor straight_through(const Tensor& soft, std::vector<double> hard) {
  if (hard.size() != soft.numel()) {
    throw DimensionError("straight_through: " + std::to_string(hard.size()) + " hard values for " +
                         shape_str(soft.dims()));
  }
  return Tensor::make_result(soft.dims(), std::move(hard), {soft}, [](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor keep_ones(const Tensor& x, const std::vector<bool>& keep) {
  if (keep.size() != x.numel()) {
    throw DimensionError("keep_ones: mask of " + std::to_string(keep.size()) + " for " + shape_str(x.dims()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (keep[i]) out[i] = 1.0;
  return Tensor::make_result(x.dims(), std::move(out), {x}, [keep](detail::TensorNode& self) {
    double* gx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (!keep[i]) gx[i] += self.grad[i];
  });
}

}  // namespace cffuse
