#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lorvp/data/dataset.hpp"
#include "lorvp/errors.hpp"

namespace lorvp::cifar10 {

// One record: 1 label byte, then 1024 R, 1024 G, 1024 B bytes (32x32 planes).
inline constexpr std::size_t kSide = 32;
inline constexpr std::size_t kPlane = kSide * kSide;
inline constexpr std::size_t kRecordBytes = 1 + 3 * kPlane;
inline constexpr std::size_t kRecordsPerFile = 10000;
inline constexpr std::size_t kFileBytes = kRecordBytes * kRecordsPerFile;
inline constexpr std::size_t kClasses = 10;

/// Byte offset of pixel (row, col, channel) of record n within a batch file.
constexpr std::size_t pixel_offset(std::size_t n, std::size_t row, std::size_t col, std::size_t channel) {
  return n * kRecordBytes + 1 + channel * kPlane + row * kSide + col;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Parses one batch file. Any whole number of records is accepted;
/// `expected_records` (when nonzero) pins the count.
inline Dataset read_batch(const std::filesystem::path& path, const std::string& split,
                          std::size_t expected_records = 0) {
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kRecordBytes != 0) {
    throw FormatError(FormatError::Kind::kMalformed,
                      "'" + path.string() + "': size " + std::to_string(bytes.size()) +
                          " is not a positive multiple of the " + std::to_string(kRecordBytes) +
                          "-byte record (offset " + std::to_string(bytes.size() - bytes.size() % kRecordBytes) +
                          " starts a partial record)");
  }
  const std::size_t n = bytes.size() / kRecordBytes;
  if (expected_records != 0 && n != expected_records) {
    throw FormatError(FormatError::Kind::kMalformed, "'" + path.string() + "': expected " +
                                                         std::to_string(expected_records * kRecordBytes) +
                                                         " bytes, found " + std::to_string(bytes.size()));
  }
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = kSide;
  ds.num_classes = kClasses;
  ds.split = split;
  ds.provenance = "cifar10:" + path.filename().string();
  ds.labels.resize(n);
  ds.pixels.resize(n * 3 * kPlane);
  for (std::size_t r = 0; r < n; ++r) {
    const auto label = static_cast<unsigned char>(bytes[r * kRecordBytes]);
    if (label >= kClasses) {
      throw FormatError(FormatError::Kind::kMalformed, "'" + path.string() + "': label byte " +
                                                           std::to_string(label) + " at offset " +
                                                           std::to_string(r * kRecordBytes) + " exceeds 9");
    }
    ds.labels[r] = label;
    std::copy(bytes.begin() + static_cast<long>(r * kRecordBytes + 1),
              bytes.begin() + static_cast<long>((r + 1) * kRecordBytes), ds.pixels.begin() + static_cast<long>(r * 3 * kPlane));
  }
  return ds;
}

/// Serializes a 3x32x32 dataset with labels < 10 in the batch layout.
inline void write_batch(const std::filesystem::path& path, const Dataset& ds) {
  if (ds.channels != 3 || ds.height != kSide || ds.width != kSide) {
    throw ConfigError("cifar10::write_batch needs 3x32x32 images");
  }
  ds.validate();
  std::vector<char> bytes(ds.size() * kRecordBytes);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (ds.labels[r] >= static_cast<int>(kClasses)) throw ConfigError("cifar10::write_batch: label exceeds 9");
    bytes[r * kRecordBytes] = static_cast<char>(ds.labels[r]);
    const auto img = ds.image(r);
    std::copy(img.begin(), img.end(), bytes.begin() + static_cast<long>(r * kRecordBytes + 1));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

/// Loads data_batch_{1..5}.bin as train and test_batch.bin as test; every
/// file must hold exactly 10,000 records.
inline std::pair<Dataset, Dataset> load(const std::filesystem::path& dir) {
  Dataset train;
  for (int i = 1; i <= 5; ++i) {
    auto part = read_batch(dir / ("data_batch_" + std::to_string(i) + ".bin"), "train", kRecordsPerFile);
    if (i == 1) {
      train = std::move(part);
      train.provenance = "cifar10:" + dir.string();
      continue;
    }
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
    train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  auto test = read_batch(dir / "test_batch.bin", "test", kRecordsPerFile);
  return {std::move(train), std::move(test)};
}

}  // namespace lorvp::cifar10
