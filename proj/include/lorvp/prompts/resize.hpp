#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lorvp/tensor/ops.hpp"

namespace lorvp {

namespace detail {

// Per output index: the two source taps and the weight of the second one.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w;
};

inline Taps half_pixel_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.w[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

/// Bilinear resize of the trailing two axes [..., h, w] -> [..., L, L] with
/// half-pixel centers: src = (i + 0.5) * (h / L) - 0.5, clamped to [0, h-1].
/// Interpolates as a + w (b - a), so equal taps and zero weights reproduce
/// the source value exactly; same-size resize copies bitwise.
template <Real T>
Tensor<T> bilinear_resize(const Tensor<T>& x, long size) {
  if (size <= 0) throw ConfigError("bilinear_resize: target size must be positive, got " + std::to_string(size));
  if (x.rank() < 2) throw ShapeError("bilinear_resize needs [..., h, w], got " + to_string(x.shape()));
  const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1), L = static_cast<std::size_t>(size);
  if (H == 0 || W == 0) throw ShapeError("bilinear_resize: empty image");
  const std::size_t planes = x.numel() / (H * W);
  const auto ty = detail::half_pixel_taps(H, L), tx = detail::half_pixel_taps(W, L);
  const auto in = x.data();
  std::vector<T> out(planes * L * L);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * H * W;
    T* dst = out.data() + p * L * L;
    for (std::size_t i = 0; i < L; ++i) {
      const T wy = static_cast<T>(ty.w[i]);
      const T* r0 = src + ty.lo[i] * W;
      const T* r1 = src + ty.hi[i] * W;
      for (std::size_t j = 0; j < L; ++j) {
        const T wx = static_cast<T>(tx.w[j]);
        T top = r0[tx.lo[j]], bottom = r1[tx.lo[j]];
        if (wx != T(0)) {
          top += wx * (r0[tx.hi[j]] - top);
          bottom += wx * (r1[tx.hi[j]] - bottom);
        }
        dst[i * L + j] = wy != T(0) ? top + wy * (bottom - top) : top;
      }
    }
  }
  Shape shape = x.shape();
  shape[shape.size() - 2] = L;
  shape[shape.size() - 1] = L;
  auto px = x.impl();
  return detail::finish<T>("bilinear_resize", shape, std::move(out), {px}, [&](const ImplPtr<T>&) {
    return [px, ty, tx, planes, H, W, L](const std::vector<T>& g) {
      auto& gx = detail::grad_buffer(*px);
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = gx.data() + p * H * W;
        const T* up = g.data() + p * L * L;
        for (std::size_t i = 0; i < L; ++i) {
          const T wy = static_cast<T>(ty.w[i]);
          for (std::size_t j = 0; j < L; ++j) {
            const T wx = static_cast<T>(tx.w[j]);
            const T v = up[i * L + j];
            dst[ty.lo[i] * W + tx.lo[j]] += (T(1) - wy) * (T(1) - wx) * v;
            dst[ty.lo[i] * W + tx.hi[j]] += (T(1) - wy) * wx * v;
            dst[ty.hi[i] * W + tx.lo[j]] += wy * (T(1) - wx) * v;
            dst[ty.hi[i] * W + tx.hi[j]] += wy * wx * v;
          }
        }
      }
    };
  });
}

}  // namespace lorvp
