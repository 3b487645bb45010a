#pragma once

#include <cstdint>
#include <string>

#include "lorvp/errors.hpp"

namespace lorvp {

enum class BackboneKind : std::uint32_t { kTinyVit = 0, kTinyCnn = 1 };

inline std::string to_string(BackboneKind k) { return k == BackboneKind::kTinyVit ? "tiny_vit" : "tiny_cnn"; }

inline BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "tiny_vit") return BackboneKind::kTinyVit;
  if (s == "tiny_cnn") return BackboneKind::kTinyCnn;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

/// Architecture of a small frozen stand-in model. For tiny_cnn, `depth`
/// counts the stride-2 stages after the stem and `embed_dim` is the final
/// channel width (= feature dim); for tiny_vit they are the usual
/// transformer depth and token width.
struct BackboneConfig {
  BackboneKind kind = BackboneKind::kTinyVit;
  std::size_t channels = 3;
  std::size_t resolution = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t num_source_classes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (channels == 0 || resolution == 0 || embed_dim == 0 || num_source_classes == 0) {
      throw ConfigError("backbone dimensions must be positive");
    }
    if (kind == BackboneKind::kTinyVit) {
      if (patch_size == 0 || resolution % patch_size != 0) {
        throw ConfigError("tiny_vit: resolution " + std::to_string(resolution) + " is not a multiple of patch size " +
                          std::to_string(patch_size));
      }
      if (heads == 0 || embed_dim % heads != 0) throw ConfigError("tiny_vit: embed_dim must divide into heads");
    } else {
      const std::size_t factor = std::size_t{1} << depth;
      if (embed_dim % factor != 0) {
        throw ConfigError("tiny_cnn: embed_dim must be divisible by 2^depth");
      }
      if (resolution < factor) throw ConfigError("tiny_cnn: resolution too small for depth");
    }
  }

  std::size_t num_patches() const {
    const std::size_t side = resolution / patch_size;
    return side * side;
  }

  bool operator==(const BackboneConfig&) const = default;
};

}  // namespace lorvp
