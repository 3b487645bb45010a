#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lorvp/backbones/backbone.hpp"
#include "lorvp/util/binary_io.hpp"

namespace lorvp {

// Layout (all integers little-endian):
//   "LVPK" | u32 version
//   config: u32 kind, u32 channels, u32 resolution, u32 patch_size,
//           u32 embed_dim, u32 depth, u32 heads, u32 num_source_classes,
//           u64 seed
//   u32 tensor count, then per tensor:
//     u32 name length | name bytes | u8 frozen | u32 rank | u32 extents[rank]
//     | f32 payload[product(extents)]
inline constexpr char kCheckpointMagic[4] = {'L', 'V', 'P', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <Real T>
void write_checkpoint(std::ostream& out, const Backbone<T>& model) {
  out.write(kCheckpointMagic, 4);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& c = model.config();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  for (std::size_t v : {c.channels, c.resolution, c.patch_size, c.embed_dim, c.depth, c.heads, c.num_source_classes}) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  io::write_le<std::uint64_t>(out, c.seed);
  const auto& entries = model.params().entries();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    io::write_le<std::uint8_t>(out, e.frozen ? 1 : 0);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (auto v : e.value.data()) io::write_le<float>(out, static_cast<float>(v));
  }
}

template <Real T>
void save_checkpoint(const Backbone<T>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  write_checkpoint(out, model);
  if (!out) throw DataError("short write to checkpoint '" + path.string() + "'");
}

/// Parses a checkpoint. Nothing is returned unless the whole file is valid
/// and its tensors match the architecture its config describes.
inline Backbone<float> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  io::read_exact(in, magic, 4, "header");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError(FormatError::Kind::kBadMagic, "checkpoint: bad magic bytes (expected LVPK)");
  }
  const auto version = io::read_le<std::uint32_t>(in, "header");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch, "checkpoint: version " + std::to_string(version) +
                                                               ", reader supports " +
                                                               std::to_string(kCheckpointVersion));
  }
  BackboneConfig c;
  const auto kind = io::read_le<std::uint32_t>(in, "config");
  if (kind > 1) throw FormatError(FormatError::Kind::kMalformed, "checkpoint: unknown backbone kind");
  c.kind = static_cast<BackboneKind>(kind);
  for (std::size_t* field : {&c.channels, &c.resolution, &c.patch_size, &c.embed_dim, &c.depth, &c.heads,
                             &c.num_source_classes}) {
    *field = io::read_le<std::uint32_t>(in, "config");
  }
  c.seed = io::read_le<std::uint64_t>(in, "config");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("checkpoint: invalid config: ") + e.what());
  }
  const auto reference = Backbone<float>::build(c);
  const auto count = io::read_le<std::uint32_t>(in, "tensor table");
  if (count != reference.params().size()) {
    throw FormatError(FormatError::Kind::kMalformed, "checkpoint: expected " +
                                                         std::to_string(reference.params().size()) + " tensors, found " +
                                                         std::to_string(count));
  }
  ParamStore<float> params;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string where = "tensor " + std::to_string(t);
    const auto len = io::read_le<std::uint32_t>(in, where + " name");
    if (len > 4096) throw FormatError(FormatError::Kind::kMalformed, "checkpoint: implausible name length");
    std::string name(len, '\0');
    io::read_exact(in, name.data(), len, where + " name");
    const std::string section = "tensor '" + name + "'";
    const bool frozen = io::read_le<std::uint8_t>(in, section + " header") != 0;
    const auto rank = io::read_le<std::uint32_t>(in, section + " header");
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint32_t>(in, section + " header");
    const auto& expected = reference.params().entries()[t];
    if (name != expected.name || shape != expected.value.shape()) {
      throw FormatError(FormatError::Kind::kMalformed, "checkpoint: " + section + " " + to_string(shape) +
                                                           " does not match architecture entry '" + expected.name +
                                                           "' " + to_string(expected.value.shape()));
    }
    std::vector<float> data(numel(shape));
    io::read_exact(in, data.data(), data.size() * sizeof(float), section + " payload");
    try {
      params.add(name, Tensor<float>(shape, std::move(data)), frozen);
    } catch (const NumericError&) {
      throw FormatError(FormatError::Kind::kMalformed, "checkpoint: non-finite values in " + section);
    }
  }
  return Backbone<float>(c, std::move(params));
}

inline Backbone<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace lorvp
