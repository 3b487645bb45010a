#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lorvp/errors.hpp"
#include "lorvp/tensor/tensor.hpp"
#include "lorvp/util/random.hpp"

namespace lorvp {

/// Target class t is read from source logit column target_to_source[t].
/// Always injective and total; construction checks both.
class LabelMap {
 public:
  LabelMap(std::vector<std::size_t> target_to_source, std::size_t num_source)
      : map_(std::move(target_to_source)), num_source_(num_source) {
    if (map_.size() > num_source_) {
      throw ConfigError("label map: " + std::to_string(map_.size()) + " target classes exceed " +
                        std::to_string(num_source_) + " source classes");
    }
    std::vector<bool> used(num_source_, false);
    for (std::size_t t = 0; t < map_.size(); ++t) {
      const auto s = map_[t];
      if (s >= num_source_) throw ContractError("label map: source index out of range for target " + std::to_string(t));
      if (used[s]) throw ContractError("label map: source " + std::to_string(s) + " mapped twice");
      used[s] = true;
    }
  }

  std::size_t num_target() const noexcept { return map_.size(); }
  std::size_t num_source() const noexcept { return num_source_; }
  std::size_t operator[](std::size_t t) const { return map_.at(t); }
  const std::vector<std::size_t>& target_to_source() const noexcept { return map_; }

  std::vector<std::int64_t> gather_index() const { return {map_.begin(), map_.end()}; }

  bool operator==(const LabelMap&) const = default;

 private:
  std::vector<std::size_t> map_;
  std::size_t num_source_;
};

/// counts[t][s]: samples of target class t that the model assigns to source class s.
using CountMatrix = std::vector<std::vector<std::uint64_t>>;

inline void check_sizes(std::size_t Ks, std::size_t Kt) {
  if (Kt > Ks) {
    throw ConfigError("label mapping needs Kt <= Ks (Kt = " + std::to_string(Kt) + ", Ks = " + std::to_string(Ks) +
                      ")");
  }
}

/// Seeded uniform injective map: the first Kt entries of a permutation.
inline LabelMap rlm(std::size_t Ks, std::size_t Kt, std::uint64_t seed) {
  check_sizes(Ks, Kt);
  Rng rng(seed);
  auto perm = rng.permutation(Ks);
  perm.resize(Kt);
  return LabelMap(std::move(perm), Ks);
}

/// Greedy frequency mapping: repeatedly take the largest remaining count,
/// assign that (t, s), and delete row t and column s. Ties go to the smaller
/// t, then the smaller s.
inline LabelMap flm(const CountMatrix& counts) {
  const std::size_t Kt = counts.size();
  const std::size_t Ks = Kt ? counts[0].size() : 0;
  for (const auto& row : counts) {
    if (row.size() != Ks) throw ShapeError("flm: ragged count matrix");
  }
  check_sizes(Ks, Kt);
  std::vector<std::size_t> map(Kt);
  std::vector<bool> row_done(Kt, false), col_done(Ks, false);
  for (std::size_t step = 0; step < Kt; ++step) {
    std::size_t bt = 0, bs = 0;
    bool found = false;
    for (std::size_t t = 0; t < Kt; ++t) {
      if (row_done[t]) continue;
      for (std::size_t s = 0; s < Ks; ++s) {
        if (col_done[s]) continue;
        if (!found || counts[t][s] > counts[bt][bs]) {
          bt = t;
          bs = s;
          found = true;
        }
      }
    }
    map[bt] = bs;
    row_done[bt] = true;
    col_done[bs] = true;
  }
  return LabelMap(std::move(map), Ks);
}

/// Accumulates argmax predictions of source logits [B, Ks] (first max wins).
template <Real T>
void accumulate_counts(CountMatrix& counts, const Tensor<T>& source_logits, std::span<const int> labels) {
  const std::size_t Ks = source_logits.dim(1);
  const auto x = source_logits.data();
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = x.subspan(b * Ks, Ks);
    const auto s = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    counts.at(static_cast<std::size_t>(labels[b])).at(s) += 1;
  }
}

/// CSV lines "target_index,source_index" with a header row.
inline std::string label_map_csv(const LabelMap& m) {
  std::string out = "target_index,source_index\n";
  for (std::size_t t = 0; t < m.num_target(); ++t) out += std::to_string(t) + "," + std::to_string(m[t]) + "\n";
  return out;
}

inline LabelMap parse_label_map_csv(const std::string& text, std::size_t num_source) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::size_t> map;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "target_index,source_index") continue;
    std::size_t t = 0, s = 0;
    char comma = 0;
    std::istringstream row(line);
    if (!(row >> t >> comma >> s) || comma != ',' || t != map.size()) {
      throw FormatError(FormatError::Kind::kMalformed, "label map csv: bad line " + std::to_string(line_no));
    }
    map.push_back(s);
  }
  try {
    return LabelMap(std::move(map), num_source);
  } catch (const Error& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("label map csv: ") + e.what());
  }
}

}  // namespace lorvp
