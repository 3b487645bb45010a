#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lorvp/errors.hpp"

namespace lorvp {

/// 8-bit image collection, images stored [N, c, h, w] row-major.
struct Dataset {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  std::string split;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const noexcept { return channels * height * width; }

  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * image_size(), image_size());
  }

  /// Checks labels in [0, K) and that pixel storage matches the geometry.
  void validate() const {
    if (pixels.size() != size() * image_size()) {
      throw DataError("dataset '" + provenance + "': pixel buffer does not match " + std::to_string(size()) +
                      " images of " + std::to_string(image_size()) + " bytes");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
        throw DataError("dataset '" + provenance + "': label " + std::to_string(labels[i]) + " at index " +
                        std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
      }
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
  }
};

}  // namespace lorvp
