#include "gsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gsnet/error.hpp"
#include "gsnet/kernels.hpp"

namespace gsnet {

using detail::make_result;
using detail::TensorImpl;

namespace {

// Gradient buffer of an input, or nullptr when it does not need one.
double* grad_of(const std::shared_ptr<TensorImpl>& t) {
  if (!t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// Strides of b viewed with a's shape (zero on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(b) + " to " + shape_to_string(a));
  }
  const std::size_t pad = a.size() - b.size();
  std::vector<std::size_t> strides(a.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = a.size(); i-- > pad;) {
    const std::size_t be = b[i - pad];
    if (be == a[i]) {
      strides[i] = stride;
    } else if (be != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(b) + " to " +
                           shape_to_string(a));
    }
    stride *= be;
  }
  return strides;
}

// Calls fn(flat_a, flat_b) for every element of a.
template <typename Fn>
void for_each_broadcast(const Shape& a, const std::vector<std::size_t>& b_strides, Fn&& fn) {
  const std::size_t rank = a.size();
  const std::size_t inner = a.back();
  const std::size_t inner_stride = b_strides.back();
  const std::size_t total = numel(a);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t bi = 0;
  for (std::size_t base = 0; base < total; base += inner) {
    for (std::size_t j = 0; j < inner; ++j) fn(base + j, bi + j * inner_stride);
    // Advance the outer multi-index.
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      bi += b_strides[ax];
      if (idx[ax] < a[ax]) break;
      bi -= b_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, a is " + shape_to_string(a.shape()) + ", b is " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(m, n, k, a.data().data(), false, b.data().data(), false, out.data(), false);
  auto ai = a.impl(), bi = b.impl();
  return make_result({m, n}, std::move(out), {ai, bi}, [ai, bi, m, n, k](const TensorImpl& o) {
    if (double* ga = grad_of(ai)) kernels::gemm(m, k, n, o.grad.data(), false, bi->data.data(), true, ga, true);
    if (double* gb = grad_of(bi)) kernels::gemm(k, n, m, ai->data.data(), true, o.grad.data(), false, gb, true);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm", "a");
  require_rank(b, 3, "bmm", "b");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw DimensionError("bmm: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + (transpose_b ? " (b transposed)" : ""));
  }
  std::vector<double> out(batch * m * n);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(m, n, k, ad + i * m * k, false, bd + i * k * n, transpose_b, out.data() + i * m * n, false);
  }
  auto ai = a.impl(), bi = b.impl();
  return make_result({batch, m, n}, std::move(out), {ai, bi}, [ai, bi, batch, m, n, k, transpose_b](const TensorImpl& o) {
    double* ga = grad_of(ai);
    double* gb = grad_of(bi);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* go = o.grad.data() + i * m * n;
      const double* av = ai->data.data() + i * m * k;
      const double* bv = bi->data.data() + i * k * n;
      if (ga) kernels::gemm(m, k, n, go, false, bv, !transpose_b, ga + i * m * k, true);
      if (gb) {
        if (transpose_b) {
          kernels::gemm(n, k, m, go, true, av, false, gb + i * k * n, true);
        } else {
          kernels::gemm(k, n, m, av, true, go, false, gb + i * k * n, true);
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  require_rank(weight, 2, "linear", "weight");
  const std::size_t din = weight.dim(0), dout = weight.dim(1);
  if (x.rank() == 0 || x.shape().back() != din) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " does not end in Din of weight " +
                         shape_to_string(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != dout)) {
    throw DimensionError("linear: bias " + shape_to_string(bias->shape()) + " does not match Dout " +
                         std::to_string(dout));
  }
  const std::size_t rows = x.size() / din;
  std::vector<double> out(rows * dout);
  if (bias) {
    const auto bd = bias->data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bd.begin(), bd.end(), out.begin() + r * dout);
  }
  kernels::gemm(rows, dout, din, x.data().data(), false, weight.data().data(), false, out.data(), true);
  Shape shape = x.shape();
  shape.back() = dout;
  auto xi = x.impl(), wi = weight.impl();
  std::vector<std::shared_ptr<TensorImpl>> inputs{xi, wi};
  std::shared_ptr<TensorImpl> bi = bias ? bias->impl() : nullptr;
  if (bi) inputs.push_back(bi);
  return make_result(std::move(shape), std::move(out), std::move(inputs), [xi, wi, bi, rows, din, dout](const TensorImpl& o) {
    if (double* gx = grad_of(xi)) kernels::gemm(rows, din, dout, o.grad.data(), false, wi->data.data(), true, gx, true);
    if (double* gw = grad_of(wi)) kernels::gemm(din, dout, rows, xi->data.data(), true, o.grad.data(), false, gw, true);
    if (bi) {
      if (double* gb = grad_of(bi)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = o.grad.data() + r * dout;
          for (std::size_t j = 0; j < dout; ++j) gb[j] += g[j];
        }
      }
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, hout, wout;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t col_cols() const { return hout * wout; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeom& g, const double* x, double* col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          double* dst = row + oy * g.wout;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wout, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wout; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeom& g, const double* col, double* x) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.wout;
          for (std::size_t ox = 0; ox < g.wout; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeom g{};
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)) + " input channels, input is " + shape_to_string(input.shape()));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) + " larger than padded input " +
                         shape_to_string(input.shape()) + " with padding " + std::to_string(padding));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias->shape()) + " does not match Cout " +
                         std::to_string(g.cout));
  }
  g.hout = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wout = (g.w + 2 * padding - g.kw) / stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.col_cols();
  std::vector<double> out(g.batch * out_plane, 0.0);
  std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
  const double* xd = input.data().data();
  const double* wd = kernel.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* ob = out.data() + b * out_plane;
    if (bias) {
      const auto bd = bias->data();
      for (std::size_t co = 0; co < g.cout; ++co) std::fill(ob + co * g.col_cols(), ob + (co + 1) * g.col_cols(), bd[co]);
    }
    const double* cb = xd + b * in_plane;
    if (!g.pointwise()) {
      im2col(g, cb, col.data());
      cb = col.data();
    }
    kernels::gemm(g.cout, g.col_cols(), g.col_rows(), wd, false, cb, false, ob, true);
  }

  auto xi = input.impl(), wi = kernel.impl();
  std::vector<std::shared_ptr<TensorImpl>> inputs{xi, wi};
  std::shared_ptr<TensorImpl> bi = bias ? bias->impl() : nullptr;
  if (bi) inputs.push_back(bi);
  return make_result({g.batch, g.cout, g.hout, g.wout}, std::move(out), std::move(inputs),
                     [xi, wi, bi, g, in_plane, out_plane](const TensorImpl& o) {
                       double* gx = grad_of(xi);
                       double* gw = grad_of(wi);
                       double* gb = bi ? grad_of(bi) : nullptr;
                       std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
                       std::vector<double> dcol(gx && !g.pointwise() ? g.col_rows() * g.col_cols() : 0);
                       for (std::size_t b = 0; b < g.batch; ++b) {
                         const double* go = o.grad.data() + b * out_plane;
                         if (gb) {
                           for (std::size_t co = 0; co < g.cout; ++co) {
                             const double* row = go + co * g.col_cols();
                             double s = 0.0;
                             for (std::size_t j = 0; j < g.col_cols(); ++j) s += row[j];
                             gb[co] += s;
                           }
                         }
                         if (gw) {
                           const double* cb = xi->data.data() + b * in_plane;
                           if (!g.pointwise()) {
                             im2col(g, cb, col.data());
                             cb = col.data();
                           }
                           kernels::gemm(g.cout, g.col_rows(), g.col_cols(), go, false, cb, true, gw, true);
                         }
                         if (gx) {
                           if (g.pointwise()) {
                             kernels::gemm(g.col_rows(), g.col_cols(), g.cout, wi->data.data(), true, go, false,
                                           gx + b * in_plane, true);
                           } else {
                             kernels::gemm(g.col_rows(), g.col_cols(), g.cout, wi->data.data(), true, go, false,
                                           dcol.data(), false);
                             col2im_add(g, dcol.data(), gx + b * in_plane);
                           }
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_to_string(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), n = s[axis], inner = prod(s, axis + 1, s.size());
  std::vector<double> out(x.size());
  const double* xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] *= inv;
    }
  }
  auto xi = x.impl();
  return make_result(s, std::move(out), {xi}, [xi, outer, n, inner](const TensorImpl& o) {
    double* gx = grad_of(xi);
    if (!gx) return;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o.grad[base + j * inner] * o.data[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t p = base + j * inner;
          gx[p] += o.data[p] * (o.grad[p] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " do not match last axis of " + shape_to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result(x.shape(), std::move(out), {xi, gi, bi},
                     [xi, gi, bi, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
                       double* gx = grad_of(xi);
                       double* gg = grad_of(gi);
                       double* gb = grad_of(bi);
                       const double* gam = gi->data.data();
                       const double dd = static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* go = o.grad.data() + r * d;
                         const double* h = xhat.data() + r * d;
                         if (gg || gb) {
                           for (std::size_t j = 0; j < d; ++j) {
                             if (gg) gg[j] += go[j] * h[j];
                             if (gb) gb[j] += go[j];
                           }
                         }
                         if (gx) {
                           double sum_g = 0.0, sum_gh = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gj = go[j] * gam[j];
                             sum_g += gj;
                             sum_gh += gj * h[j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gj = go[j] * gam[j];
                             gx[r * d + j] += inv_std[r] * (gj - sum_g / dd - h[j] * sum_gh / dd);
                           }
                         }
                       }
                     });
}

namespace {
thread_local std::uint64_t* sign_hash = nullptr;
constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;
}  // namespace

ReluSignProbe::ReluSignProbe() : hash_(kFnvOffset), previous_(sign_hash) { sign_hash = &hash_; }
ReluSignProbe::~ReluSignProbe() { sign_hash = previous_; }

Tensor activation(const Tensor& x, ActivationKind kind) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  if (kind == ActivationKind::kRelu) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    if (sign_hash) {
      std::uint64_t h = *sign_hash;
      for (std::size_t i = 0; i < out.size(); ++i) h = (h ^ static_cast<std::uint64_t>(xd[i] > 0.0)) * kFnvPrime;
      *sign_hash = h;
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
  }
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {xi}, [xi, kind](const TensorImpl& o) {
    double* gx = grad_of(xi);
    if (!gx) return;
    if (kind == ActivationKind::kRelu) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        if (xi->data[i] > 0.0) gx[i] += o.grad[i];
      }
    } else {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.data().begin(), a.data().end());
  auto ai = a.impl(), bi = b.impl();
  if (a.shape() == b.shape()) {
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return make_result(a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl& o) {
      if (ai->requires_grad) ai->accumulate_grad(o.grad);
      if (bi->requires_grad) bi->accumulate_grad(o.grad);
    });
  }
  auto strides = broadcast_strides(a.shape(), b.shape(), "add");
  const double* bd = b.data().data();
  for_each_broadcast(a.shape(), strides, [&](std::size_t i, std::size_t j) { out[i] += bd[j]; });
  return make_result(a.shape(), std::move(out), {ai, bi}, [ai, bi, strides](const TensorImpl& o) {
    if (ai->requires_grad) ai->accumulate_grad(o.grad);
    if (double* gb = grad_of(bi)) {
      for_each_broadcast(o.shape, strides, [&](std::size_t i, std::size_t j) { gb[j] += o.grad[i]; });
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.data().begin(), a.data().end());
  auto ai = a.impl(), bi = b.impl();
  auto strides = broadcast_strides(a.shape(), b.shape(), "mul");
  const double* bd = b.data().data();
  for_each_broadcast(a.shape(), strides, [&](std::size_t i, std::size_t j) { out[i] *= bd[j]; });
  return make_result(a.shape(), std::move(out), {ai, bi}, [ai, bi, strides](const TensorImpl& o) {
    double* ga = grad_of(ai);
    double* gb = grad_of(bi);
    const double* av = ai->data.data();
    const double* bv = bi->data.data();
    for_each_broadcast(o.shape, strides, [&](std::size_t i, std::size_t j) {
      if (ga) ga[i] += o.grad[i] * bv[j];
      if (gb) gb[j] += o.grad[i] * av[i];
    });
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {xi}, [xi, factor](const TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += factor * o.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xi = x.impl();
  return make_result({1}, {s}, {xi}, [xi](const TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += o.grad[0];
    }
  });
}

Tensor mean_last(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<double> out(rows, 0.0);
  const double* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xd[r * n + j];
    out[r] = s / static_cast<double>(n);
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  auto xi = x.impl();
  return make_result(std::move(shape), std::move(out), {xi}, [xi, rows, n](const TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += o.grad[r] * inv;
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t batch = logits.dim(0), n = logits.dim(1);
  if (labels.size() != batch) {
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  const double* ld = logits.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= n) {
      throw InputError("cross_entropy: label " + std::to_string(labels[b]) + " out of range [0," +
                       std::to_string(n) + ")");
    }
    const double* row = ld + b * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[b * n + j] = std::exp(row[j] - mx);
      total += probs[b * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[b * n + j] /= total;
    loss += (mx + std::log(total)) - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  auto li = logits.impl();
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return make_result({1}, {loss}, {li}, [li, batch, n, probs = std::move(probs), lab = std::move(lab)](const TensorImpl& o) {
    double* gl = grad_of(li);
    if (!gl) return;
    const double s = o.grad[0] / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        gl[b * n + j] += s * (probs[b * n + j] - (j == lab[b] ? 1.0 : 0.0));
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xi = x.impl();
  return make_result(std::move(shape), std::move(out), {xi}, [xi](const TensorImpl& o) {
    if (xi->requires_grad) xi->accumulate_grad(o.grad);
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  const std::size_t rank = s.size();
  std::vector<bool> used(rank, false);
  if (order.size() != rank) throw DimensionError("permute: order rank mismatch for " + shape_to_string(s));
  for (auto o : order) {
    if (o >= rank || used[o]) throw DimensionError("permute: invalid axis order for " + shape_to_string(s));
    used[o] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * s[i + 1];
  Shape out_shape(rank);
  std::vector<std::size_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = s[order[i]];
    strides[i] = in_strides[order[i]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(x.size());
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    (*index)[flat] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      src += strides[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return gather(x, std::move(index), std::move(out_shape));
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape& si = xs[i].shape();
    bool ok = si.size() == first.size();
    for (std::size_t d = 0; ok && d < si.size(); ++d) ok = d == axis || si[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: input " + std::to_string(i) + " has shape " + shape_to_string(si) +
                           ", incompatible with " + shape_to_string(first) + " on axis " + std::to_string(axis));
    }
    out_shape[axis] += si[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t rest = prod(first, axis + 1, first.size());
  const std::size_t out_row = out_shape[axis] * rest;
  std::vector<double> out(numel(out_shape));
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t row = x.dim(axis) * rest;
    const double* xd = x.data().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy(xd + o * row, xd + (o + 1) * row, out.begin() + o * out_row + offset);
    impls.push_back(x.impl());
    offsets.push_back(offset);
    offset += row;
  }
  auto inputs = impls;
  return make_result(std::move(out_shape), std::move(out), std::move(inputs),
                     [impls, offsets, outer, out_row, rest, axis](const TensorImpl& o) {
                       for (std::size_t i = 0; i < impls.size(); ++i) {
                         double* g = grad_of(impls[i]);
                         if (!g) continue;
                         const std::size_t row = impls[i]->shape[axis] * rest;
                         for (std::size_t a = 0; a < outer; ++a) {
                           const double* src = o.grad.data() + a * out_row + offsets[i];
                           for (std::size_t j = 0; j < row; ++j) g[a * row + j] += src[j];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " + shape_to_string(s));
  }
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t rest = prod(s, axis + 1, s.size());
  const std::size_t in_row = s[axis] * rest;
  const std::size_t out_row = length * rest;
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * out_row);
  const double* xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(xd + o * in_row + start * rest, xd + o * in_row + start * rest + out_row, out.begin() + o * out_row);
  }
  auto xi = x.impl();
  return make_result(std::move(out_shape), std::move(out), {xi}, [xi, outer, in_row, out_row, start, rest](const TensorImpl& o) {
    double* g = grad_of(xi);
    if (!g) return;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t j = 0; j < out_row; ++j) g[a * in_row + start * rest + j] += o.grad[a * out_row + j];
    }
  });
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape) {
  if (numel(out_shape) != index->size()) {
    throw DimensionError("gather: index length " + std::to_string(index->size()) + " does not match " +
                         shape_to_string(out_shape));
  }
  const double* xd = x.data().data();
  const std::size_t n = x.size();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= n) throw DimensionError("gather: index " + std::to_string(src) + " out of range for " + shape_to_string(x.shape()));
    out[i] = xd[src];
  }
  auto xi = x.impl();
  return make_result(std::move(out_shape), std::move(out), {xi}, [xi, index](const TensorImpl& o) {
    if (double* g = grad_of(xi)) {
      for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += o.grad[i];
    }
  });
}

}  // namespace gsnet
