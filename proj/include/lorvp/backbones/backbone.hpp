#pragma once

#include <optional>
#include <string>
#include <utility>

#include "lorvp/backbones/config.hpp"
#include "lorvp/nn/layers.hpp"
#include "lorvp/nn/params.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

template <Real T>
struct BackboneOutput {
  Tensor<T> features;  // [B, F]
  Tensor<T> logits;    // [B, Ks]
};

/// Tiny frozen-able vision model: a feature extractor plus a source
/// classifier head (`head.weight` [Ks, F], `head.bias` [Ks]).
template <Real T>
class Backbone {
 public:
  /// Deterministic seeded initialization; parameters start trainable.
  static Backbone build(const BackboneConfig& config) {
    config.validate();
    ParamStore<T> p;
    Rng rng(config.seed);
    if (config.kind == BackboneKind::kTinyCnn) {
      std::size_t width = config.embed_dim >> config.depth;
      init_conv2d(p, "stem", config.channels, width, 3, rng);
      for (std::size_t i = 0; i < config.depth; ++i) {
        init_conv2d(p, "stage" + std::to_string(i), width, width * 2, 3, rng);
        width *= 2;
      }
    } else {
      const std::size_t D = config.embed_dim, P = config.patch_size;
      init_conv2d(p, "patch", config.channels, D, P, rng);
      p.add("pos", gaussian<T>({config.num_patches(), D}, rng, 0.02));
      for (std::size_t i = 0; i < config.depth; ++i) {
        const std::string b = "block" + std::to_string(i);
        init_layernorm(p, b + ".ln1", D);
        init_attention(p, b + ".attn", D, rng);
        init_layernorm(p, b + ".ln2", D);
        init_linear(p, b + ".mlp.fc1", D, 4 * D, rng);
        init_linear(p, b + ".mlp.fc2", 4 * D, D, rng);
      }
      init_layernorm(p, "norm", D);
    }
    init_linear(p, "head", config.embed_dim, config.num_source_classes, rng);
    return Backbone(config, std::move(p));
  }

  Backbone(BackboneConfig config, ParamStore<T> params) : config_(config), params_(std::move(params)) {}

  const BackboneConfig& config() const noexcept { return config_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& params() noexcept { return params_; }

  std::size_t feature_dim() const noexcept { return config_.embed_dim; }
  std::size_t num_source_classes() const noexcept { return config_.num_source_classes; }

  void freeze() { params_.freeze_all(); }
  bool frozen() const { return params_.all_frozen(); }
  std::uint64_t checksum() const { return params_.checksum(); }

  /// images [B, c, L, L] at exactly the configured resolution.
  BackboneOutput<T> forward(const Tensor<T>& images) const {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.resolution || s[3] != config_.resolution) {
      throw ShapeError("backbone expects [B," + std::to_string(config_.channels) + "," +
                       std::to_string(config_.resolution) + "," + std::to_string(config_.resolution) + "], got " +
                       to_string(s));
    }
    Tensor<T> features = config_.kind == BackboneKind::kTinyCnn ? cnn_features(images) : vit_features(images);
    Tensor<T> logits = layer_forward(LayerKind::kLinear, params_, "head", features);
    return {features, logits};
  }

  template <Real U>
  Backbone<U> cast() const {
    return Backbone<U>(config_, params_.template cast<U>());
  }

 private:
  Tensor<T> cnn_features(const Tensor<T>& x) const {
    auto h = gelu(layer_forward(LayerKind::kConv2d, params_, "stem", x, {{1, 1}, 1}));
    for (std::size_t i = 0; i < config_.depth; ++i) {
      h = gelu(layer_forward(LayerKind::kConv2d, params_, "stage" + std::to_string(i), h, {{2, 1}, 1}));
    }
    const std::size_t B = h.dim(0), C = h.dim(1);
    return mean_axis(reshape(h, {B, C, h.dim(2) * h.dim(3)}), -1);
  }

  Tensor<T> vit_features(const Tensor<T>& x) const {
    const std::size_t B = x.dim(0), D = config_.embed_dim, N = config_.num_patches();
    auto tokens = layer_forward(LayerKind::kConv2d, params_, "patch", x, {{config_.patch_size, 0}, 1});
    auto h = add(permute(reshape(tokens, {B, D, N}), {0, 2, 1}), params_.at("pos"));
    for (std::size_t i = 0; i < config_.depth; ++i) {
      const std::string b = "block" + std::to_string(i);
      auto a = layer_forward(LayerKind::kLayerNorm, params_, b + ".ln1", h);
      h = add(h, layer_forward(LayerKind::kMultiHeadAttention, params_, b + ".attn", a, {{}, config_.heads}));
      auto m = layer_forward(LayerKind::kLayerNorm, params_, b + ".ln2", h);
      m = gelu(layer_forward(LayerKind::kLinear, params_, b + ".mlp.fc1", m));
      h = add(h, layer_forward(LayerKind::kLinear, params_, b + ".mlp.fc2", m));
    }
    h = layer_forward(LayerKind::kLayerNorm, params_, "norm", h);
    return mean_axis(h, 1);
  }

  BackboneConfig config_;
  ParamStore<T> params_;
};

}  // namespace lorvp
