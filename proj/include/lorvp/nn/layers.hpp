#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "lorvp/nn/params.hpp"
#include "lorvp/tensor/ops.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

/// Affine map over the last axis: x [..., in] -> x W^T + b, W [out, in].
template <Real T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias) {
  if (x.rank() == 0 || weight.rank() != 2 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(1), out = weight.dim(0);
  if (bias && bias->shape() != Shape{out}) throw ShapeError("linear: bias must be [out_features]");
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out;
  std::vector<T> y(rows * out);
  kernel::gemm<T>(false, true, rows, out, in, x.data().data(), weight.data().data(), y.data(), false);
  if (bias) {
    const auto b = bias->data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out; ++j) y[r * out + j] += b[j];
  }
  auto px = x.impl();
  auto pw = weight.impl();
  ImplPtr<T> pb = bias ? bias->impl() : nullptr;
  std::vector<ImplPtr<T>> inputs{px, pw};
  if (pb) inputs.push_back(pb);
  return detail::finish<T>("linear", out_shape, std::move(y), inputs, [=](const ImplPtr<T>&) {
    return [=](const std::vector<T>& g) {
      if (px->requires_grad) {
        kernel::gemm<T>(false, false, rows, in, out, g.data(), pw->data.data(),
                        detail::grad_buffer(*px).data(), true);
      }
      if (pw->requires_grad) {
        kernel::gemm<T>(true, false, out, in, rows, g.data(), px->data.data(),
                        detail::grad_buffer(*pw).data(), true);
      }
      if (pb && pb->requires_grad) {
        auto& gb = detail::grad_buffer(*pb);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out; ++j) gb[j] += g[r * out + j];
      }
    };
  });
}

template <Real T>
struct AttentionResult {
  Tensor<T> output;  // [B, N, D]
  Tensor<T> probs;   // [B, H, N, N]
};

/// Multi-head self-attention over x [B, N, D] with projections
/// `prefix.{q,k,v,o}.{weight,bias}`.
template <Real T>
AttentionResult<T> multi_head_attention(const ParamStore<T>& params, const std::string& prefix,
                                        const Tensor<T>& x, std::size_t heads) {
  if (x.rank() != 3) throw ShapeError("attention expects [batch, tokens, dim]");
  const std::size_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  if (heads == 0 || D % heads != 0) throw ShapeError("attention: dim not divisible by heads");
  const std::size_t dh = D / heads;
  const auto project = [&](const std::string& name) {
    auto y = linear(x, params.at(prefix + "." + name + ".weight"),
                    std::optional<Tensor<T>>(params.at(prefix + "." + name + ".bias")));
    return permute(reshape(y, {B, N, heads, dh}), {0, 2, 1, 3});
  };
  auto q = project("q");
  auto k = project("k");
  auto v = project("v");
  auto scores = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(dh)));
  auto probs = softmax(scores);
  auto ctx = reshape(permute(matmul(probs, v), {0, 2, 1, 3}), {B, N, D});
  auto out = linear(ctx, params.at(prefix + ".o.weight"), std::optional<Tensor<T>>(params.at(prefix + ".o.bias")));
  return {out, probs};
}

enum class LayerKind { kLinear, kConv2d, kLayerNorm, kMultiHeadAttention, kRelu, kGelu };

struct LayerOptions {
  Conv2dGeometry conv{};
  std::size_t heads = 1;
};

/// Runs one layer whose parameters live under `prefix` in `params`
/// (`weight`/`bias` for linear and conv2d, `gamma`/`beta` for layernorm).
template <Real T>
Tensor<T> layer_forward(LayerKind kind, const ParamStore<T>& params, const std::string& prefix,
                        const Tensor<T>& x, LayerOptions options = {}) {
  switch (kind) {
    case LayerKind::kLinear:
      return linear(x, params.at(prefix + ".weight"), std::optional<Tensor<T>>(params.at(prefix + ".bias")));
    case LayerKind::kConv2d:
      return conv2d(x, params.at(prefix + ".weight"), std::optional<Tensor<T>>(params.at(prefix + ".bias")),
                    options.conv);
    case LayerKind::kLayerNorm:
      return layernorm(x, params.at(prefix + ".gamma"), params.at(prefix + ".beta"));
    case LayerKind::kMultiHeadAttention:
      return multi_head_attention(params, prefix, x, options.heads).output;
    case LayerKind::kRelu:
      return relu(x);
    case LayerKind::kGelu:
      return gelu(x);
  }
  throw ContractError("unknown layer kind");
}

// Initializers. Weights are N(0, 1/fan_in) scaled by `gain`, biases zero.

template <Real T>
Tensor<T> gaussian(Shape shape, Rng& rng, double stddev) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>(std::move(shape), std::move(data));
}

template <Real T>
void init_linear(ParamStore<T>& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                 double gain = 1.0) {
  params.add(prefix + ".weight", gaussian<T>({out, in}, rng, gain / std::sqrt(static_cast<double>(in))));
  params.add(prefix + ".bias", Tensor<T>::zeros({out}));
}

template <Real T>
void init_conv2d(ParamStore<T>& params, const std::string& prefix, std::size_t in, std::size_t out,
                 std::size_t kernel, Rng& rng) {
  const double fan_in = static_cast<double>(in * kernel * kernel);
  params.add(prefix + ".weight", gaussian<T>({out, in, kernel, kernel}, rng, std::sqrt(2.0 / fan_in)));
  params.add(prefix + ".bias", Tensor<T>::zeros({out}));
}

template <Real T>
void init_layernorm(ParamStore<T>& params, const std::string& prefix, std::size_t dim) {
  params.add(prefix + ".gamma", Tensor<T>::full({dim}, T(1)));
  params.add(prefix + ".beta", Tensor<T>::zeros({dim}));
}

template <Real T>
void init_attention(ParamStore<T>& params, const std::string& prefix, std::size_t dim, Rng& rng) {
  for (const char* name : {"q", "k", "v", "o"}) init_linear(params, prefix + "." + name, dim, dim, rng);
}

}  // namespace lorvp
