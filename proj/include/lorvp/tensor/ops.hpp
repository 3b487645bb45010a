#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorvp/tensor/tensor.hpp"
#include "lorvp/util/gemm.hpp"

namespace lorvp {

namespace detail {

// Wraps a freshly computed result: checks finiteness, and records a tape
// node when gradient recording is on and some input requires grad.
// `make_backward(out)` is only invoked when a node is actually recorded.
template <Real T, class MakeBackward>
Tensor<T> finish(std::string_view op, Shape shape, std::vector<T> data,
                 std::vector<ImplPtr<T>> inputs, MakeBackward&& make_backward) {
  check_finite<T>(data, op);
  auto out = std::make_shared<TensorImpl<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  const bool track =
      GradMode::enabled() &&
      std::any_of(inputs.begin(), inputs.end(), [](const auto& p) { return p->requires_grad; });
  if (track) {
    out->requires_grad = true;
    auto rule = make_backward(out);
    Tape<T>::current().record(op, std::move(inputs), out, std::move(rule));
  }
  return Tensor<T>(std::move(out));
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast
// result of shapes a and b.
template <class F>
void for_each_broadcast(const Shape& a, const Shape& b, const Shape& out, F&& f) {
  const std::size_t n = numel(out);
  if (a == out && b == out) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t na = numel(a), nb = numel(b);
  const auto suffix = [&](const Shape& s) {
    return s.size() <= out.size() && std::equal(s.begin(), s.end(), out.end() - s.size());
  };
  if (a == out && suffix(b)) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
    return;
  }
  if (b == out && suffix(a)) {
    for (std::size_t i = 0; i < n; ++i) f(i, i % na, i);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++idx[d] < out[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (out[d] - 1);
      ib -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

template <Real T, class Fwd, class Da, class Db>
Tensor<T> binary_broadcast(std::string_view op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd,
                           Da da, Db db) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  std::vector<T> out(numel(out_shape));
  const auto x = a.data();
  const auto y = b.data();
  for_each_broadcast(a.shape(), b.shape(), out_shape,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(x[ia], y[ib]); });
  auto pa = a.impl();
  auto pb = b.impl();
  return finish<T>(op, out_shape, std::move(out), {pa, pb}, [=](const ImplPtr<T>&) {
    return [pa, pb, shape = out_shape, da, db](const std::vector<T>& g) {
      if (pa->requires_grad) {
        auto& ga = grad_buffer(*pa);
        for_each_broadcast(pa->shape, pb->shape, shape, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          ga[ia] += da(g[i], pa->data[ia], pb->data[ib]);
        });
      }
      if (pb->requires_grad) {
        auto& gb = grad_buffer(*pb);
        for_each_broadcast(pa->shape, pb->shape, shape, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          gb[ib] += db(g[i], pa->data[ia], pb->data[ib]);
        });
      }
    };
  });
}

template <Real T, class Fwd, class Deriv>
Tensor<T> unary(std::string_view op, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  auto pa = a.impl();
  return finish<T>(op, a.shape(), std::move(out), {pa}, [=](const ImplPtr<T>&) {
    return [pa, deriv](const std::vector<T>& g) {
      auto& ga = grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(pa->data[i]);
    };
  });
}

inline std::size_t normalize_axis(long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <Real T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <Real T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary<T>("scale", a, [s](T x) { return s * x; }, [s](T) { return s; });
}

template <Real T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

/// Exact (erf-based) GELU.
template <Real T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
  return detail::unary<T>(
      "gelu", a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      });
}

// ----------------------------------------------------------------- reductions

template <Real T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto x = a.data();
  T acc = T(0);
  for (auto v : x) acc += v;
  auto pa = a.impl();
  return detail::finish<T>("sum", Shape{}, {acc}, {pa}, [=](const ImplPtr<T>&) {
    return [pa](const std::vector<T>& g) {
      auto& ga = detail::grad_buffer(*pa);
      for (auto& v : ga) v += g[0];
    };
  });
}

template <Real T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(std::max<std::size_t>(1, a.numel())));
}

/// Sum over one axis; the axis is removed from the result shape.
template <Real T>
Tensor<T> sum_axis(const Tensor<T>& a, long axis_in) {
  const std::size_t axis = detail::normalize_axis(axis_in, a.rank());
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  const auto x = a.data();
  std::vector<T> out(outer * inner, T(0));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const T* src = x.data() + (o * n + k) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  auto pa = a.impl();
  return detail::finish<T>("sum_axis", out_shape, std::move(out), {pa}, [=](const ImplPtr<T>&) {
    return [pa, outer, inner, n](const std::vector<T>& g) {
      auto& ga = detail::grad_buffer(*pa);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
          T* dst = ga.data() + (o * n + k) * inner;
          const T* src = g.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

template <Real T>
Tensor<T> mean_axis(const Tensor<T>& a, long axis) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  return scale(sum_axis(a, axis), T(1) / static_cast<T>(std::max<std::size_t>(1, a.dim(ax))));
}

// ------------------------------------------------------------------ reshaping

template <Real T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  }
  auto pa = a.impl();
  std::vector<T> data(a.data().begin(), a.data().end());
  return detail::finish<T>("reshape", std::move(shape), std::move(data), {pa}, [=](const ImplPtr<T>&) {
    return [pa](const std::vector<T>& g) {
      auto& ga = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  });
}

template <Real T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  const auto in_strides = strides_of(s);
  std::vector<std::size_t> src_stride(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]]) throw ShapeError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = s[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  // source flat index for each output element
  const std::size_t n = a.numel();
  std::vector<std::size_t> src(n);
  {
    std::vector<std::size_t> idx(s.size(), 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      src[i] = off;
      for (std::size_t d = s.size(); d-- > 0;) {
        if (++idx[d] < out_shape[d]) {
          off += src_stride[d];
          break;
        }
        off -= src_stride[d] * (out_shape[d] - 1);
        idx[d] = 0;
      }
    }
  }
  const auto x = a.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[src[i]];
  auto pa = a.impl();
  return detail::finish<T>("permute", out_shape, std::move(out), {pa}, [&](const ImplPtr<T>&) {
    return [pa, src = std::move(src)](const std::vector<T>& g) {
      auto& ga = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[src[i]] += g[i];
    };
  });
}

/// Swaps the last two axes.
template <Real T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

/// Selects along the flattened trailing block: a [..., n] -> [..., m] with
/// out[..., j] = a[..., index[j]], or 0 where index[j] < 0. Backward
/// scatter-adds, so repeated indices accumulate.
template <Real T>
Tensor<T> gather_last(const Tensor<T>& a, std::span<const std::int64_t> index) {
  if (a.rank() == 0) throw ShapeError("gather_last on a scalar");
  const std::size_t n = a.shape().back();
  const std::size_t outer = a.numel() / std::max<std::size_t>(1, n);
  const std::size_t m = index.size();
  for (auto i : index) {
    if (i >= static_cast<std::int64_t>(n)) throw ShapeError("gather_last: index out of range");
  }
  Shape out_shape = a.shape();
  out_shape.back() = m;
  const auto x = a.data();
  std::vector<T> out(outer * m, T(0));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      if (index[j] >= 0) out[o * m + j] = x[o * n + static_cast<std::size_t>(index[j])];
    }
  }
  auto pa = a.impl();
  return detail::finish<T>("gather", out_shape, std::move(out), {pa}, [&](const ImplPtr<T>&) {
    return [pa, idx = std::vector<std::int64_t>(index.begin(), index.end()), outer, n,
            m](const std::vector<T>& g) {
      auto& ga = detail::grad_buffer(*pa);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < m; ++j) {
          if (idx[j] >= 0) ga[o * n + static_cast<std::size_t>(idx[j])] += g[o * m + j];
        }
      }
    };
  });
}

// ------------------------------------------------------------------- products

/// Batched matrix product: a [..., m, k] x b [..., k, n] -> [..., m, n] with
/// broadcasting over the leading dims.
template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) {
    throw ShapeError("matmul inner dims differ: " + to_string(sa) + " x " + to_string(sb));
  }
  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  const Shape bo = broadcast_shapes(ba, bb);
  const std::size_t batches = numel(bo);
  std::vector<std::size_t> ia(batches), ib(batches);
  detail::for_each_broadcast(ba, bb, bo, [&](std::size_t i, std::size_t x, std::size_t y) {
    ia[i] = x;
    ib[i] = y;
  });
  Shape out_shape = bo;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batches * m * n);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t t = 0; t < batches; ++t) {
    kernel::gemm<T>(false, false, m, n, k, x.data() + ia[t] * m * k, y.data() + ib[t] * k * n,
                    out.data() + t * m * n, false);
  }
  auto pa = a.impl();
  auto pb = b.impl();
  return detail::finish<T>("matmul", out_shape, std::move(out), {pa, pb}, [&](const ImplPtr<T>&) {
    return [pa, pb, ia = std::move(ia), ib = std::move(ib), m, n, k](const std::vector<T>& g) {
      for (std::size_t t = 0; t < ia.size(); ++t) {
        const T* gt = g.data() + t * m * n;
        if (pa->requires_grad) {
          auto& ga = detail::grad_buffer(*pa);
          kernel::gemm<T>(false, true, m, k, n, gt, pb->data.data() + ib[t] * k * n,
                          ga.data() + ia[t] * m * k, true);
        }
        if (pb->requires_grad) {
          auto& gb = detail::grad_buffer(*pb);
          kernel::gemm<T>(true, false, k, n, m, pa->data.data() + ia[t] * m * k, gt,
                          gb.data() + ib[t] * k * n, true);
        }
      }
    };
  });
}

// ---------------------------------------------------------------- activations

/// Softmax over the last axis, computed with max-subtraction.
template <Real T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() == 0) throw ShapeError("softmax on a scalar");
  detail::check_finite<T>(a.data(), "softmax input");
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(1, k);
  const auto x = a.data();
  std::vector<T> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * k;
    T* o = out.data() + r * k;
    const T mx = *std::max_element(in, in + k);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= total;
  }
  auto pa = a.impl();
  return detail::finish<T>("softmax", a.shape(), std::move(out), {pa}, [=](const ImplPtr<T>& o) {
    std::weak_ptr<TensorImpl<T>> wo = o;
    return [pa, wo, rows, k](const std::vector<T>& g) {
      const auto& y = wo.lock()->data;
      auto& ga = detail::grad_buffer(*pa);
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
        for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
      }
    };
  });
}

/// Normalizes the last axis to zero mean and unit variance, then applies
/// gamma/beta (both shaped [last]).
template <Real T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  if (x.rank() == 0) throw ShapeError("layernorm on a scalar");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layernorm affine params must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.numel() / std::max<std::size_t>(1, d);
  const auto in = x.data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  std::vector<T> out(x.numel()), xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = ga[j] * h + be[j];
    }
  }
  auto px = x.impl();
  auto pg = gamma.impl();
  auto pb = beta.impl();
  return detail::finish<T>("layernorm", x.shape(), std::move(out), {px, pg, pb}, [&](const ImplPtr<T>&) {
    return [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](const std::vector<T>& g) {
      if (pg->requires_grad) {
        auto& gg = detail::grad_buffer(*pg);
        for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
      }
      if (pb->requires_grad) {
        auto& gb = detail::grad_buffer(*pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
      }
      if (px->requires_grad) {
        auto& gx = detail::grad_buffer(*px);
        const auto& gamma_v = pg->data;
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dh = T(0), mean_dh_h = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T dh = g[r * d + j] * gamma_v[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * d + j];
          }
          mean_dh /= static_cast<T>(d);
          mean_dh_h /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const T dh = g[r * d + j] * gamma_v[j];
            gx[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
          }
        }
      }
    };
  });
}

// --------------------------------------------------------------- convolution

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

namespace detail {

template <Real T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            std::size_t Ho, std::size_t Wo, Conv2dGeometry geo, T* cols) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long y = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.padding);
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long xx = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.padding);
            const bool inside = y >= 0 && y < static_cast<long>(H) && xx >= 0 && xx < static_cast<long>(W);
            row[oy * Wo + ox] = inside ? x[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(xx)] : T(0);
          }
        }
      }
    }
  }
}

template <Real T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
                std::size_t Ho, std::size_t Wo, Conv2dGeometry geo, T* gx) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long y = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.padding);
          if (y < 0 || y >= static_cast<long>(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long xx = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.padding);
            if (xx < 0 || xx >= static_cast<long>(W)) continue;
            gx[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(xx)] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation: x [B,C,H,W], weight [O,C,kh,kw], bias [O] -> [B,O,Ho,Wo].
template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv2dGeometry geo = {}) {
  if (x.rank() != 4 || weight.rank() != 4) throw ShapeError("conv2d expects rank-4 input and weight");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(x.shape()) + ", weight " +
                     to_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{O}) throw ShapeError("conv2d bias must be [out_channels]");
  if (geo.stride == 0 || H + 2 * geo.padding < kh || W + 2 * geo.padding < kw) {
    throw ShapeError("conv2d kernel larger than padded input");
  }
  const std::size_t Ho = (H + 2 * geo.padding - kh) / geo.stride + 1;
  const std::size_t Wo = (W + 2 * geo.padding - kw) / geo.stride + 1;
  const std::size_t ckk = C * kh * kw, hw = Ho * Wo;
  std::vector<T> out(B * O * hw);
  std::vector<T> cols(ckk * hw);
  const auto xd = x.data();
  const auto wd = weight.data();
  for (std::size_t b = 0; b < B; ++b) {
    detail::im2col(xd.data() + b * C * H * W, C, H, W, kh, kw, Ho, Wo, geo, cols.data());
    T* o = out.data() + b * O * hw;
    kernel::gemm<T>(false, false, O, hw, ckk, wd.data(), cols.data(), o, false);
    if (bias) {
      const auto bd = bias->data();
      for (std::size_t oc = 0; oc < O; ++oc) {
        for (std::size_t p = 0; p < hw; ++p) o[oc * hw + p] += bd[oc];
      }
    }
  }
  auto px = x.impl();
  auto pw = weight.impl();
  std::vector<ImplPtr<T>> inputs{px, pw};
  ImplPtr<T> pb = bias ? bias->impl() : nullptr;
  if (pb) inputs.push_back(pb);
  return detail::finish<T>("conv2d", Shape{B, O, Ho, Wo}, std::move(out), inputs, [=](const ImplPtr<T>&) {
    return [=](const std::vector<T>& g) {
      std::vector<T> buf(ckk * hw);
      for (std::size_t b = 0; b < B; ++b) {
        const T* gb = g.data() + b * O * hw;
        if (pw->requires_grad) {
          detail::im2col(px->data.data() + b * C * H * W, C, H, W, kh, kw, Ho, Wo, geo, buf.data());
          kernel::gemm<T>(false, true, O, ckk, hw, gb, buf.data(), detail::grad_buffer(*pw).data(), true);
        }
        if (px->requires_grad) {
          kernel::gemm<T>(true, false, ckk, hw, O, pw->data.data(), gb, buf.data(), false);
          detail::col2im_add(buf.data(), C, H, W, kh, kw, Ho, Wo, geo,
                             detail::grad_buffer(*px).data() + b * C * H * W);
        }
        if (pb && pb->requires_grad) {
          auto& gbias = detail::grad_buffer(*pb);
          for (std::size_t oc = 0; oc < O; ++oc) {
            for (std::size_t p = 0; p < hw; ++p) gbias[oc] += gb[oc * hw + p];
          }
        }
      }
    };
  });
}

}  // namespace lorvp
