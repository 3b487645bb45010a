#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "lorvp/errors.hpp"

namespace lorvp {

enum class DesignKind { kPad, kPatchPad, kPatchFree, kPatchSame, kLoRVP };

inline std::string to_string(DesignKind k) {
  switch (k) {
    case DesignKind::kPad: return "pad";
    case DesignKind::kPatchPad: return "patch_pad";
    case DesignKind::kPatchFree: return "patch_free";
    case DesignKind::kPatchSame: return "patch_same";
    case DesignKind::kLoRVP: return "lorvp";
  }
  return "?";
}

inline DesignKind parse_design_kind(const std::string& s) {
  for (auto k : {DesignKind::kPad, DesignKind::kPatchPad, DesignKind::kPatchFree, DesignKind::kPatchSame,
                 DesignKind::kLoRVP}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown prompt design '" + s + "'");
}

/// One of the five prompt geometries for c channels at model resolution L.
/// Only the fields of the active kind are meaningful.
struct PromptDesign {
  DesignKind kind = DesignKind::kLoRVP;
  std::size_t channels = 3;
  std::size_t resolution = 32;
  std::size_t pad_size = 0;   // Pad: s
  std::size_t pad_width = 0;  // Pad: p
  std::size_t grid = 0;       // PatchPad: g
  std::size_t inner = 0;      // PatchPad: inner_s
  std::size_t tile = 0;       // PatchSame: P
  std::size_t rank = 0;       // LoRVP: r
  double init_std = 0.0;      // LoRVP: std of A; 0 means 1/sqrt(L)

  static PromptDesign pad(std::size_t c, std::size_t L, std::size_t s, std::size_t p) {
    PromptDesign d{DesignKind::kPad, c, L};
    d.pad_size = s;
    d.pad_width = p;
    return d;
  }
  static PromptDesign patch_pad(std::size_t c, std::size_t L, std::size_t g, std::size_t inner_s) {
    PromptDesign d{DesignKind::kPatchPad, c, L};
    d.grid = g;
    d.inner = inner_s;
    return d;
  }
  static PromptDesign patch_free(std::size_t c, std::size_t L) { return {DesignKind::kPatchFree, c, L}; }
  static PromptDesign patch_same(std::size_t c, std::size_t L, std::size_t P) {
    PromptDesign d{DesignKind::kPatchSame, c, L};
    d.tile = P;
    return d;
  }
  static PromptDesign lorvp(std::size_t c, std::size_t L, std::size_t r) {
    PromptDesign d{DesignKind::kLoRVP, c, L};
    d.rank = r;
    return d;
  }

  /// Border width around each PatchPad cell: (L/g - inner_s) / 2.
  std::size_t patch_pad_width() const { return (resolution / grid - inner) / 2; }

  /// Side of the square the raw image is resized to before prompting.
  std::size_t input_size() const {
    switch (kind) {
      case DesignKind::kPad: return pad_size;
      case DesignKind::kPatchPad: return grid * inner;
      default: return resolution;
    }
  }

  double a_std() const { return init_std > 0 ? init_std : 1.0 / std::sqrt(static_cast<double>(resolution)); }

  void validate() const {
    const auto L = resolution;
    if (channels == 0 || L == 0) throw ConfigError("prompt: channels and resolution must be positive");
    switch (kind) {
      case DesignKind::kPad:
        if (pad_size == 0 || pad_size + 2 * pad_width != L) {
          throw ConfigError("pad: s + 2p must equal L (" + std::to_string(pad_size) + " + 2*" +
                            std::to_string(pad_width) + " = " + std::to_string(pad_size + 2 * pad_width) +
                            ", L = " + std::to_string(L) + ")");
        }
        break;
      case DesignKind::kPatchPad:
        if (grid == 0 || L % grid != 0) {
          throw ConfigError("patch_pad: grid " + std::to_string(grid) + " must divide L = " + std::to_string(L));
        }
        if (inner == 0 || inner >= L / grid || (L / grid - inner) % 2 != 0) {
          throw ConfigError("patch_pad: pad = (L/g - inner_s)/2 must be a positive integer (L/g = " +
                            std::to_string(L / grid) + ", inner_s = " + std::to_string(inner) + ")");
        }
        break;
      case DesignKind::kPatchFree:
        break;
      case DesignKind::kPatchSame:
        if (tile == 0 || L % tile != 0) {
          throw ConfigError("patch_same: tile " + std::to_string(tile) + " must divide L = " + std::to_string(L));
        }
        break;
      case DesignKind::kLoRVP:
        if (rank < 1 || rank > L) {
          throw ConfigError("lorvp: rank must satisfy 1 <= r <= L (r = " + std::to_string(rank) +
                            ", L = " + std::to_string(L) + ")");
        }
        if (!(init_std >= 0.0) || !std::isfinite(init_std)) throw ConfigError("lorvp: init_std must be >= 0");
        break;
    }
  }

  bool operator==(const PromptDesign&) const = default;
};

/// Number of tunable prompt values.
inline std::size_t param_count(const PromptDesign& d) {
  d.validate();
  const std::size_t c = d.channels, L = d.resolution;
  switch (d.kind) {
    case DesignKind::kPad: return c * (L * L - d.pad_size * d.pad_size);
    case DesignKind::kPatchPad: return c * (L * L - d.grid * d.grid * d.inner * d.inner);
    case DesignKind::kPatchFree: return c * L * L;
    case DesignKind::kPatchSame: return c * d.tile * d.tile;
    case DesignKind::kLoRVP: return 2 * c * d.rank * L;
  }
  return 0;
}

/// Standard geometry for a design at resolution L given the backbone patch
/// size: Pad border ~3L/14 (p = 48 at L = 224), PatchPad one cell per
/// backbone patch with a border of max(1, patch/16), PatchSame tile = patch.
inline PromptDesign default_design(DesignKind kind, std::size_t c, std::size_t L, std::size_t patch,
                                   std::size_t rank = 4) {
  switch (kind) {
    case DesignKind::kPad: {
      const auto p = static_cast<std::size_t>(std::lround(3.0 * static_cast<double>(L) / 14.0));
      return PromptDesign::pad(c, L, L - 2 * p, p);
    }
    case DesignKind::kPatchPad: {
      const std::size_t border = std::max<std::size_t>(1, patch / 16);
      return PromptDesign::patch_pad(c, L, L / patch, patch - 2 * border);
    }
    case DesignKind::kPatchFree: return PromptDesign::patch_free(c, L);
    case DesignKind::kPatchSame: return PromptDesign::patch_same(c, L, patch);
    case DesignKind::kLoRVP: return PromptDesign::lorvp(c, L, rank);
  }
  return {};
}

}  // namespace lorvp
