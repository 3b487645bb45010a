#pragma once

#include <optional>
#include <string>

#include "lorvp/backbones/backbone.hpp"
#include "lorvp/nn/layers.hpp"
#include "lorvp/outmap/label_map.hpp"

namespace lorvp {

enum class TransformKind { kRLM, kFLM, kILM, kFM, kLP };

inline std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::kRLM: return "rlm";
    case TransformKind::kFLM: return "flm";
    case TransformKind::kILM: return "ilm";
    case TransformKind::kFM: return "fm";
    case TransformKind::kLP: return "lp";
  }
  return "?";
}

inline TransformKind parse_transform_kind(const std::string& s) {
  for (auto k : {TransformKind::kRLM, TransformKind::kFLM, TransformKind::kILM, TransformKind::kFM,
                 TransformKind::kLP}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown output transform '" + s + "'");
}

inline bool uses_head(TransformKind k) { return k == TransformKind::kFM || k == TransformKind::kLP; }

/// Trainable affine head "weight" [Kt, in], "bias" [Kt]. FM reads source
/// logits (in = Ks); LP reads backbone features (in = F).
template <Real T>
struct Head {
  TransformKind kind = TransformKind::kLP;
  ParamStore<T> params;

  std::size_t in_features() const { return params.at("weight").dim(1); }
  std::size_t out_features() const { return params.at("weight").dim(0); }
};

/// weight ~ N(0, 0.01) from `seed`, bias = 0.
template <Real T>
Head<T> make_head(TransformKind kind, std::size_t in, std::size_t out, std::uint64_t seed) {
  if (!uses_head(kind)) throw ConfigError("make_head: " + to_string(kind) + " has no head");
  if (in == 0 || out == 0) throw ConfigError("make_head: dimensions must be positive");
  Head<T> h{kind, {}};
  Rng rng(seed);
  h.params.add("weight", gaussian<T>({out, in}, rng, 0.01));
  h.params.add("bias", Tensor<T>::zeros({out}));
  return h;
}

/// Column selection logits[:, map[t]]; each output column copies one input column.
template <Real T>
Tensor<T> transform(const Tensor<T>& source_logits, const LabelMap& map) {
  if (source_logits.rank() != 2 || source_logits.dim(1) != map.num_source()) {
    throw ShapeError("label map over " + std::to_string(map.num_source()) + " source classes applied to " +
                     to_string(source_logits.shape()));
  }
  return gather_last(source_logits, map.gather_index());
}

template <Real T>
Tensor<T> transform(const Tensor<T>& input, const Head<T>& head) {
  if (input.rank() != 2 || input.dim(1) != head.in_features()) {
    throw ShapeError(to_string(head.kind) + " head expects [B, " + std::to_string(head.in_features()) + "], got " +
                     to_string(input.shape()));
  }
  return linear(input, head.params.at("weight"), std::optional<Tensor<T>>(head.params.at("bias")));
}

/// M of the objective: a label map or a head, fed from the matching backbone output.
template <Real T>
struct OutputTransform {
  TransformKind kind = TransformKind::kLP;
  std::optional<LabelMap> map;
  std::optional<Head<T>> head;

  Tensor<T> operator()(const BackboneOutput<T>& out) const {
    switch (kind) {
      case TransformKind::kLP: return transform(out.features, *head);
      case TransformKind::kFM: return transform(out.logits, *head);
      default: return transform(out.logits, *map);
    }
  }

  std::size_t param_count() const { return head ? head->params.element_count() : 0; }
};

}  // namespace lorvp
