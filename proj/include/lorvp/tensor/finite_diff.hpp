#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "lorvp/tensor/tensor.hpp"

namespace lorvp {

/// Central differences (f(x + eps*e_i) - f(x - eps*e_i)) / (2 eps) for every
/// element of x. f is evaluated with gradient recording suspended.
template <Real T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps) {
  if (!(eps > T(0))) throw ContractError("finite_diff_grad: eps must be positive");
  NoGradGuard no_grad;
  std::vector<T> grad(x.numel());
  Tensor<T> probe = x.clone();
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T original = values[i];
    values[i] = original + eps;
    const T up = f(probe);
    values[i] = original - eps;
    const T down = f(probe);
    values[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: f is not finite near element " + std::to_string(i));
    }
    grad[i] = (up - down) / (T(2) * eps);
  }
  return Tensor<T>(x.shape(), std::move(grad));
}

/// Same central differences, perturbing a parameter in place (restored
/// afterwards). Used when the parameter lives inside a model and the loss
/// closure reads it by reference.
template <Real T>
std::vector<T> finite_diff_param(const std::function<T()>& loss, Tensor<T> param, T eps) {
  if (!(eps > T(0))) throw ContractError("finite_diff_param: eps must be positive");
  NoGradGuard no_grad;
  auto values = param.mutable_data();
  std::vector<T> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T original = values[i];
    values[i] = original + eps;
    const T up = loss();
    values[i] = original - eps;
    const T down = loss();
    values[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_param: loss is not finite near element " + std::to_string(i));
    }
    grad[i] = (up - down) / (T(2) * eps);
  }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||, floor); 0 when the denominator vanishes.
/// The floor keeps identically-zero gradients from dividing noise by noise.
template <Real T>
double relative_error(std::span<const T> a, std::span<const T> b, double floor = 0.0) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    diff += (x - y) * (x - y);
    na += x * x;
    nb += y * y;
  }
  const double denom = std::max(std::sqrt(std::max(na, nb)), floor);
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

template <Real T>
double l2_norm(std::span<const T> a) {
  double total = 0.0;
  for (auto v : a) total += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(total);
}

}  // namespace lorvp
