#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lorvp/data/dataset.hpp"
#include "lorvp/tensor/tensor.hpp"

namespace lorvp {

/// Per-channel statistics of pixel values scaled to [0, 1].
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline ChannelStats channel_stats(const Dataset& ds) {
  const std::size_t plane = ds.height * ds.width;
  ChannelStats s{std::vector<double>(ds.channels, 0.0), std::vector<double>(ds.channels, 0.0)};
  const double count = static_cast<double>(ds.size() * plane);
  if (count == 0) throw DataError("cannot compute statistics of an empty dataset");
  for (std::size_t c = 0; c < ds.channels; ++c) {
    double total = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const std::uint8_t* p = ds.pixels.data() + n * ds.image_size() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = p[i] / 255.0;
        total += v;
        sq += v * v;
      }
    }
    s.mean[c] = total / count;
    s.std[c] = std::sqrt(std::max(0.0, sq / count - s.mean[c] * s.mean[c]));
  }
  return s;
}

/// Float images x' = (x/255 - mean) / std with the stats kept for inversion.
struct NormalizedDataset {
  Tensor<float> images;  // [N, c, h, w]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  ChannelStats stats;
  std::string split;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
};

inline NormalizedDataset normalize(const Dataset& ds, const ChannelStats& stats) {
  if (stats.mean.size() != ds.channels || stats.std.size() != ds.channels) {
    throw ConfigError("normalization stats have the wrong channel count");
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
  }
  const std::size_t plane = ds.height * ds.width;
  std::vector<float> out(ds.pixels.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t c = 0; c < ds.channels; ++c) {
      const std::size_t off = n * ds.image_size() + c * plane;
      const double m = stats.mean[c], s = stats.std[c];
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = static_cast<float>((ds.pixels[off + i] / 255.0 - m) / s);
      }
    }
  }
  NormalizedDataset nd;
  nd.images = Tensor<float>({ds.size(), ds.channels, ds.height, ds.width}, std::move(out));
  nd.labels = ds.labels;
  nd.num_classes = ds.num_classes;
  nd.stats = stats;
  nd.split = ds.split;
  nd.provenance = ds.provenance;
  return nd;
}

/// Inverse of normalize(): pixel values back on the [0, 1] scale.
inline Tensor<float> denormalize(const NormalizedDataset& nd) {
  const auto& shape = nd.images.shape();
  const std::size_t C = shape[1], plane = shape[2] * shape[3];
  std::vector<float> out(nd.images.numel());
  const auto x = nd.images.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = (i / plane) % C;
    out[i] = static_cast<float>(x[i] * nd.stats.std[c] + nd.stats.mean[c]);
  }
  return Tensor<float>(shape, std::move(out));
}

}  // namespace lorvp
