#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "lorvp/tensor/tensor.hpp"
#include "lorvp/util/binary_io.hpp"

namespace lorvp {

/// Writes a [c, h, w] prompt as binary PPM (c = 3) or PGM (c = 1 or any
/// other c, channels stacked vertically). Each channel is min-max scaled to
/// 0..255 on its own. clamp_abs > 0 first clips values to
/// [-clamp_abs, clamp_abs]; this affects the picture only.
template <Real T>
void export_prompt_image(const Tensor<T>& vp, const std::filesystem::path& path, double clamp_abs = 0.0) {
  if (vp.rank() != 3) throw ShapeError("export_prompt_image expects [c, h, w], got " + to_string(vp.shape()));
  const std::size_t C = vp.dim(0), H = vp.dim(1), W = vp.dim(2), plane = H * W;
  std::vector<unsigned char> scaled(vp.numel());
  const auto x = vp.data();
  for (std::size_t ch = 0; ch < C; ++ch) {
    std::vector<double> v(x.begin() + static_cast<long>(ch * plane), x.begin() + static_cast<long>((ch + 1) * plane));
    if (clamp_abs > 0) {
      for (auto& e : v) e = std::clamp(e, -clamp_abs, clamp_abs);
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < plane; ++i) {
      const double t = range > 0 ? (v[i] - *lo) / range : 0.5;
      scaled[ch * plane + i] = static_cast<unsigned char>(std::lround(255.0 * t));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  if (C == 3) {
    out << "P6\n" << W << ' ' << H << "\n255\n";
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch) out.put(static_cast<char>(scaled[ch * plane + i]));
  } else {
    out << "P5\n" << W << ' ' << H * C << "\n255\n";
    out.write(reinterpret_cast<const char*>(scaled.data()), static_cast<std::streamsize>(scaled.size()));
  }
}

/// Raw little-endian float32 values in row-major order, no header.
template <Real T>
void export_prompt_raw(const Tensor<T>& vp, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (auto v : vp.data()) io::write_le<float>(out, static_cast<float>(v));
}

}  // namespace lorvp
