#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lorvp/data/dataset.hpp"
#include "lorvp/errors.hpp"
#include "lorvp/util/checksum.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

enum class SyntheticKind { kOrientedGratings, kColoredShapes };

inline std::string to_string(SyntheticKind k) {
  return k == SyntheticKind::kOrientedGratings ? "oriented_gratings" : "colored_shapes";
}

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "oriented_gratings") return SyntheticKind::kOrientedGratings;
  if (s == "colored_shapes") return SyntheticKind::kColoredShapes;
  throw ConfigError("unknown synthetic generator '" + s + "'");
}

/// Seeded toy classification task. A "target" task is the same generator
/// with a hue rotation applied to every pixel and, optionally, a fixed
/// permutation of the class ids.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kOrientedGratings;
  std::size_t num_samples = 1000;
  std::size_t num_classes = 10;
  std::size_t height = 32;
  std::size_t width = 32;
  double separation = 0.5;  // 0 = hardest, 1 = cleanest
  double hue_shift_deg = 0.0;
  bool remap_classes = false;
  std::uint64_t seed = 0;
  std::string split = "train";
};

/// The target-domain counterpart of `source`: identical images rotated in
/// hue by `hue_shift_deg`, with class ids permuted.
inline SyntheticSpec target_of(SyntheticSpec source, double hue_shift_deg = 120.0) {
  source.hue_shift_deg = hue_shift_deg;
  source.remap_classes = true;
  return source;
}

namespace synthetic_detail {

// Pure chroma direction for hue angle h (components sum to zero).
inline void chroma(double h, double out[3]) {
  out[0] = std::cos(h);
  out[1] = std::cos(h - 2.0 * M_PI / 3.0);
  out[2] = std::cos(h + 2.0 * M_PI / 3.0);
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline std::uint64_t split_seed(const SyntheticSpec& spec) {
  Checksum c;
  c.update(spec.split);
  return mix_seed(spec.seed, c.value());
}

inline void render_grating(const SyntheticSpec& spec, int k, Rng& rng, std::uint8_t* img) {
  const double K = static_cast<double>(spec.num_classes);
  const double sep = std::clamp(spec.separation, 0.0, 1.0);
  const double theta = M_PI * k / K + (1.0 - sep) * rng.normal() * M_PI / (2.0 * K);
  const double freq = 0.15;
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double contrast = rng.uniform(0.6, 1.0);
  double tint[3];
  chroma(2.0 * M_PI * k / K, tint);
  const double noise = 8.0 + 24.0 * (1.0 - sep);
  const double c = std::cos(theta), s = std::sin(theta);
  const std::size_t plane = spec.height * spec.width;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double g = std::sin(2.0 * M_PI * freq * (x * c + y * s) + phase);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = 128.0 + 70.0 * contrast * g + 45.0 * sep * tint[ch] + noise * rng.normal();
        img[ch * plane + y * spec.width + x] = quantize(v);
      }
    }
  }
}

inline bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:  // disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case 2:  // triangle, apex up
      return dy >= -r && dy <= 0.6 * r && std::abs(dx) <= (dy + r) * 0.6;
    default: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
  }
}

inline void render_shape(const SyntheticSpec& spec, int k, Rng& rng, std::uint8_t* img) {
  const double K = static_cast<double>(spec.num_classes);
  const double sep = std::clamp(spec.separation, 0.0, 1.0);
  const double side = static_cast<double>(std::min(spec.height, spec.width));
  const double r = side * rng.uniform(0.18, 0.3);
  const double cx = rng.uniform(r, spec.width - r), cy = rng.uniform(r, spec.height - r);
  double tint[3];
  chroma(2.0 * M_PI * k / K, tint);
  const double noise = 8.0 + 24.0 * (1.0 - sep);
  const double amplitude = 20.0 + 40.0 * sep;
  const std::size_t plane = spec.height * spec.width;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const bool in = inside_shape(k % 4, x + 0.5 - cx, y + 0.5 - cy, r);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double base = in ? 170.0 + amplitude * tint[ch] : 90.0;
        img[ch * plane + y * spec.width + x] = quantize(base + noise * rng.normal());
      }
    }
  }
}

}  // namespace synthetic_detail

/// Rotates every RGB pixel about the gray axis by `degrees` (Rodrigues),
/// rounding and clamping back to 8 bits.
inline void hue_rotate(Dataset& ds, double degrees) {
  if (ds.channels != 3) throw ConfigError("hue rotation needs 3-channel images");
  const double a = degrees * M_PI / 180.0;
  const double cs = std::cos(a), sn = std::sin(a), k = 1.0 / std::sqrt(3.0);
  // R = cos I + sin [u]x + (1 - cos) u u^T with u = (1,1,1)/sqrt3
  double R[3][3];
  const double uu = (1.0 - cs) / 3.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R[i][j] = (i == j ? cs : 0.0) + uu;
  R[0][1] -= sn * k;
  R[0][2] += sn * k;
  R[1][0] += sn * k;
  R[1][2] -= sn * k;
  R[2][0] -= sn * k;
  R[2][1] += sn * k;
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    std::uint8_t* img = ds.pixels.data() + n * ds.image_size();
    for (std::size_t p = 0; p < plane; ++p) {
      const double v[3] = {double(img[p]), double(img[plane + p]), double(img[2 * plane + p])};
      for (int i = 0; i < 3; ++i) {
        img[i * plane + p] = synthetic_detail::quantize(R[i][0] * v[0] + R[i][1] * v[1] + R[i][2] * v[2]);
      }
    }
  }
}

/// Fixed class permutation used by target tasks; depends only on the task
/// seed so train and test splits agree.
inline std::vector<int> class_remap(std::size_t num_classes, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xC1A55));
  const auto perm = rng.permutation(num_classes);
  return std::vector<int>(perm.begin(), perm.end());
}

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic task needs at least 2 classes");
  if (spec.height == 0 || spec.width == 0) throw ConfigError("synthetic images need positive size");
  Dataset ds;
  ds.channels = 3;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.num_classes = spec.num_classes;
  ds.split = spec.split;
  ds.provenance = "synthetic:" + to_string(spec.kind) + ":seed=" + std::to_string(spec.seed);
  const std::uint64_t base = synthetic_detail::split_seed(spec);
  // balanced labels in a seeded order
  Rng order(mix_seed(base, 0));
  const auto perm = order.permutation(spec.num_samples);
  ds.labels.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    ds.labels[i] = static_cast<int>(perm[i] % spec.num_classes);
  }
  ds.pixels.resize(spec.num_samples * ds.image_size());
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    Rng rng(mix_seed(base, i + 1));
    std::uint8_t* img = ds.pixels.data() + i * ds.image_size();
    if (spec.kind == SyntheticKind::kOrientedGratings) {
      synthetic_detail::render_grating(spec, ds.labels[i], rng, img);
    } else {
      synthetic_detail::render_shape(spec, ds.labels[i], rng, img);
    }
  }
  if (spec.hue_shift_deg != 0.0) hue_rotate(ds, spec.hue_shift_deg);
  if (spec.remap_classes) {
    const auto remap = class_remap(spec.num_classes, spec.seed);
    for (auto& y : ds.labels) y = remap[static_cast<std::size_t>(y)];
  }
  return ds;
}

}  // namespace lorvp
