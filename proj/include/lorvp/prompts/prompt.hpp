#pragma once

#include <cstdint>
#include <vector>

#include "lorvp/nn/layers.hpp"
#include "lorvp/nn/params.hpp"
#include "lorvp/prompts/design.hpp"
#include "lorvp/prompts/resize.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

namespace detail {

// For each canvas position (ch, i, j) of [c, L, L]: the index of the prompt
// value that lives there, or -1 inside image regions.
inline std::vector<std::int64_t> prompt_layout(const PromptDesign& d) {
  const std::size_t c = d.channels, L = d.resolution;
  std::vector<std::int64_t> layout(c * L * L, -1);
  std::int64_t next = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        auto& slot = layout[(ch * L + i) * L + j];
        switch (d.kind) {
          case DesignKind::kPad: {
            const auto p = d.pad_width, s = d.pad_size;
            if (i < p || i >= p + s || j < p || j >= p + s) slot = next++;
            break;
          }
          case DesignKind::kPatchPad: {
            const std::size_t cell = L / d.grid, pad = d.patch_pad_width();
            const auto a = i % cell, b = j % cell;
            if (a < pad || a >= pad + d.inner || b < pad || b >= pad + d.inner) slot = next++;
            break;
          }
          case DesignKind::kPatchSame: {
            const std::size_t P = d.tile;
            slot = static_cast<std::int64_t>((ch * P + i % P) * P + j % P);
            break;
          }
          default:
            break;
        }
      }
  return layout;
}

// For each canvas position: the flat index into the [c, S, S] resized image
// (S = input_size) that lands there, or -1 on prompt borders. Empty for
// designs whose canvas is the resized image itself.
inline std::vector<std::int64_t> image_placement(const PromptDesign& d) {
  if (d.kind != DesignKind::kPad && d.kind != DesignKind::kPatchPad) return {};
  const std::size_t c = d.channels, L = d.resolution, S = d.input_size();
  std::vector<std::int64_t> place(c * L * L, -1);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        std::size_t si, sj;
        if (d.kind == DesignKind::kPad) {
          const auto p = d.pad_width;
          if (i < p || i >= p + S || j < p || j >= p + S) continue;
          si = i - p;
          sj = j - p;
        } else {
          const std::size_t cell = L / d.grid, pad = d.patch_pad_width();
          const auto a = i % cell, b = j % cell;
          if (a < pad || a >= pad + d.inner || b < pad || b >= pad + d.inner) continue;
          si = (i / cell) * d.inner + (a - pad);
          sj = (j / cell) * d.inner + (b - pad);
        }
        place[(ch * L + i) * L + j] = static_cast<std::int64_t>((ch * S + si) * S + sj);
      }
  return place;
}

}  // namespace detail

/// Tunable prompt state (the additive/padded delta). Parameters by design:
///   lorvp: "B" [c, L, r], "A" [c, r, L]
///   pad, patch_pad: "border" [n] scattered by layout()
///   patch_free: "delta" [c, L, L]
///   patch_same: "tile" [c, P, P]
template <Real T>
class Prompt {
 public:
  Prompt(PromptDesign design, ParamStore<T> params)
      : design_(design), params_(std::move(params)), layout_(detail::prompt_layout(design_)) {}

  const PromptDesign& design() const noexcept { return design_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& params() noexcept { return params_; }
  const std::vector<std::int64_t>& layout() const noexcept { return layout_; }

  /// The visual prompt VP [c, L, L].
  Tensor<T> materialize() const {
    const std::size_t c = design_.channels, L = design_.resolution;
    switch (design_.kind) {
      case DesignKind::kLoRVP:
        return matmul(params_.at("B"), params_.at("A"));
      case DesignKind::kPatchFree:
        return params_.at("delta");
      case DesignKind::kPatchSame: {
        const auto& tile = params_.at("tile");
        return reshape(gather_last(reshape(tile, {tile.numel()}), layout_), {c, L, L});
      }
      default: {
        const auto& border = params_.at("border");
        return reshape(gather_last(border, layout_), {c, L, L});
      }
    }
  }

  template <Real U>
  Prompt<U> cast() const {
    return Prompt<U>(design_, params_.template cast<U>());
  }

 private:
  PromptDesign design_;
  ParamStore<T> params_;
  std::vector<std::int64_t> layout_;
};

/// LoRVP: B = 0, A ~ N(0, a_std) from `seed`; all other designs start at
/// zero. Every prompt parameter requires grad.
template <Real T>
Prompt<T> init_prompt(const PromptDesign& d, std::uint64_t seed) {
  d.validate();
  const std::size_t c = d.channels, L = d.resolution;
  ParamStore<T> p;
  switch (d.kind) {
    case DesignKind::kLoRVP: {
      Rng rng(seed);
      p.add("B", Tensor<T>::zeros({c, L, d.rank}));
      p.add("A", gaussian<T>({c, d.rank, L}, rng, d.a_std()));
      break;
    }
    case DesignKind::kPatchFree:
      p.add("delta", Tensor<T>::zeros({c, L, L}));
      break;
    case DesignKind::kPatchSame:
      p.add("tile", Tensor<T>::zeros({c, d.tile, d.tile}));
      break;
    default:
      p.add("border", Tensor<T>::zeros({param_count(d)}));
      break;
  }
  return Prompt<T>(d, std::move(p));
}

/// The prompt-free canvas: images [..., c, h, w] resized to the design's
/// input size and, for padded designs, placed onto a zero [c, L, L] canvas.
template <Real T>
Tensor<T> prepare_input(const PromptDesign& d, const Tensor<T>& images) {
  d.validate();
  if (images.rank() < 3 || images.dim(images.rank() - 3) != d.channels) {
    throw ShapeError("prompt input must be [..., " + std::to_string(d.channels) + ", h, w], got " +
                     to_string(images.shape()));
  }
  auto resized = bilinear_resize(images, static_cast<long>(d.input_size()));
  const auto placement = detail::image_placement(d);
  if (placement.empty()) return resized;
  const std::size_t c = d.channels, L = d.resolution, S = d.input_size();
  Shape flat(resized.shape().begin(), resized.shape().end() - 3);
  flat.push_back(c * S * S);
  Shape canvas(resized.shape().begin(), resized.shape().end() - 3);
  canvas.insert(canvas.end(), {c, L, L});
  return reshape(gather_last(reshape(resized, flat), placement), canvas);
}

/// Prompted canvas = prepare_input(images) + VP, broadcast over the batch.
template <Real T>
Tensor<T> apply_prepared(const Prompt<T>& prompt, const Tensor<T>& prepared) {
  return add(prepared, prompt.materialize());
}

template <Real T>
Tensor<T> apply(const Prompt<T>& prompt, const Tensor<T>& images) {
  return apply_prepared(prompt, prepare_input(prompt.design(), images));
}

}  // namespace lorvp
