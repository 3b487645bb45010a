#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lorvp/backbones/config.hpp"
#include "lorvp/backbones/pretrain.hpp"
#include "lorvp/data/synthetic.hpp"
#include "lorvp/outmap/transform.hpp"
#include "lorvp/prompts/design.hpp"

namespace lorvp {

using Json = nlohmann::ordered_json;

/// Where images come from. "synthetic": the source task is the generator
/// as specified and the target task is its hue-rotated, class-remapped
/// counterpart. "cifar10": both roles read the binary batches in `dir`.
struct DatasetConfig {
  std::string kind = "synthetic";
  std::string dir;
  SyntheticKind generator = SyntheticKind::kOrientedGratings;
  std::size_t num_classes = 10;
  std::size_t train_samples = 1000;
  std::size_t test_samples = 500;
  double separation = 0.5;
  double hue_shift_deg = 120.0;
  std::uint64_t seed = 0;
  std::size_t limit_train = 0;  // cifar10: keep the first n records (0 = all)
  std::size_t limit_test = 0;

  bool operator==(const DatasetConfig&) const = default;
};

enum class Profile { kDesk, kPaper };

inline Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::kDesk;
  if (s == "paper") return Profile::kPaper;
  throw ConfigError("unknown profile '" + s + "' (expected desk or paper)");
}

/// Declarative description of one adaptation run (and of the pretraining
/// that produces its backbone when no checkpoint is given).
struct ExperimentConfig {
  std::string checkpoint;
  DatasetConfig dataset;
  BackboneConfig backbone;
  PretrainConfig pretrain;

  std::string design = "lorvp";  // a design name or "none"
  TransformKind transform = TransformKind::kLP;
  std::size_t rank = 4;
  std::size_t pad_size = 0, pad_width = 0, grid = 0, inner = 0, tile = 0;  // 0 = default geometry
  double init_std = 0.0;

  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool cosine = false;
  bool flip = false;
  std::string prompt_space = "normalized";  // or "pixel"
  std::string map_split = "train";          // or "test"
  std::uint64_t seed = 0;
  std::string output_dir;
  std::size_t eval_workers = 0;  // 0 = one per hardware thread
  bool canonical = false;

  std::vector<std::uint64_t> seeds;  // compare: empty = {seed}
  std::vector<std::size_t> ranks{1, 2, 4, 8, 16};

  static ExperimentConfig defaults(Profile profile) {
    ExperimentConfig c;
    if (profile == Profile::kPaper) {
      c.epochs = 20;
      c.batch_size = 256;
      c.backbone.resolution = 224;
      c.backbone.patch_size = 32;
    }
    return c;
  }

  bool has_prompt() const { return design != "none"; }

  void validate() const {
    if (has_prompt()) parse_design_kind(design);
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (prompt_space != "normalized" && prompt_space != "pixel") {
      throw ConfigError("prompt_space must be normalized or pixel");
    }
    if (map_split != "train" && map_split != "test") throw ConfigError("map_split must be train or test");
    if (dataset.kind != "synthetic" && dataset.kind != "cifar10") {
      throw ConfigError("dataset.kind must be synthetic or cifar10");
    }
    if (!has_prompt() && !uses_head(transform)) {
      throw ConfigError("design none is only meaningful with an fm or lp head");
    }
    backbone.validate();
  }
};

/// The prompt geometry a config asks for on a given backbone.
inline PromptDesign make_design(const ExperimentConfig& c, const BackboneConfig& b) {
  auto d = default_design(parse_design_kind(c.design), b.channels, b.resolution, b.patch_size, c.rank);
  if (c.pad_size) d.pad_size = c.pad_size;
  if (c.pad_width) d.pad_width = c.pad_width;
  if (c.grid) d.grid = c.grid;
  if (c.inner) d.inner = c.inner;
  if (c.tile) d.tile = c.tile;
  d.init_std = c.init_std;
  d.validate();
  return d;
}

namespace config_detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <class V>
void read(const Json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

}  // namespace config_detail

inline Json to_json(const DatasetConfig& d) {
  return Json{{"kind", d.kind},
              {"dir", d.dir},
              {"generator", to_string(d.generator)},
              {"num_classes", d.num_classes},
              {"train_samples", d.train_samples},
              {"test_samples", d.test_samples},
              {"separation", d.separation},
              {"hue_shift_deg", d.hue_shift_deg},
              {"seed", d.seed},
              {"limit_train", d.limit_train},
              {"limit_test", d.limit_test}};
}

inline Json to_json(const BackboneConfig& b) {
  return Json{{"kind", to_string(b.kind)},     {"channels", b.channels},   {"resolution", b.resolution},
              {"patch_size", b.patch_size},    {"embed_dim", b.embed_dim}, {"depth", b.depth},
              {"heads", b.heads},              {"num_source_classes", b.num_source_classes},
              {"seed", b.seed}};
}

inline Json to_json(const PretrainConfig& p) {
  return Json{{"epochs", p.epochs},       {"batch_size", p.batch_size},     {"lr", p.lr},
              {"momentum", p.momentum},   {"weight_decay", p.weight_decay}, {"seed", p.seed},
              {"flip", p.flip}};
}

inline Json to_json(const ExperimentConfig& c) {
  return Json{{"checkpoint", c.checkpoint},
              {"dataset", to_json(c.dataset)},
              {"backbone", to_json(c.backbone)},
              {"pretrain", to_json(c.pretrain)},
              {"design", c.design},
              {"transform", to_string(c.transform)},
              {"rank", c.rank},
              {"pad_size", c.pad_size},
              {"pad_width", c.pad_width},
              {"grid", c.grid},
              {"inner", c.inner},
              {"tile", c.tile},
              {"init_std", c.init_std},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"cosine", c.cosine},
              {"flip", c.flip},
              {"prompt_space", c.prompt_space},
              {"map_split", c.map_split},
              {"seed", c.seed},
              {"output_dir", c.output_dir},
              {"eval_workers", c.eval_workers},
              {"canonical", c.canonical},
              {"seeds", c.seeds},
              {"ranks", c.ranks}};
}

/// Overlays the keys present in `j` onto `c`. Unknown keys and wrong types
/// are config errors.
inline void apply_json(ExperimentConfig& c, const Json& j) {
  using namespace config_detail;
  reject_unknown(j,
                 {"checkpoint", "dataset", "backbone", "pretrain", "design", "transform", "rank", "pad_size",
                  "pad_width", "grid", "inner", "tile", "init_std", "epochs", "batch_size", "lr", "momentum",
                  "weight_decay", "cosine", "flip", "prompt_space", "map_split", "seed", "output_dir",
                  "eval_workers", "canonical", "seeds", "ranks"},
                 "");
  read(j, "checkpoint", c.checkpoint, "");
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d,
                   {"kind", "dir", "generator", "num_classes", "train_samples", "test_samples", "separation",
                    "hue_shift_deg", "seed", "limit_train", "limit_test"},
                   "dataset.");
    auto& o = c.dataset;
    read(d, "kind", o.kind, "dataset.");
    read(d, "dir", o.dir, "dataset.");
    std::string gen = to_string(o.generator);
    read(d, "generator", gen, "dataset.");
    o.generator = parse_synthetic_kind(gen);
    read(d, "num_classes", o.num_classes, "dataset.");
    read(d, "train_samples", o.train_samples, "dataset.");
    read(d, "test_samples", o.test_samples, "dataset.");
    read(d, "separation", o.separation, "dataset.");
    read(d, "hue_shift_deg", o.hue_shift_deg, "dataset.");
    read(d, "seed", o.seed, "dataset.");
    read(d, "limit_train", o.limit_train, "dataset.");
    read(d, "limit_test", o.limit_test, "dataset.");
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    reject_unknown(b,
                   {"kind", "channels", "resolution", "patch_size", "embed_dim", "depth", "heads",
                    "num_source_classes", "seed"},
                   "backbone.");
    auto& o = c.backbone;
    std::string kind = to_string(o.kind);
    read(b, "kind", kind, "backbone.");
    o.kind = parse_backbone_kind(kind);
    read(b, "channels", o.channels, "backbone.");
    read(b, "resolution", o.resolution, "backbone.");
    read(b, "patch_size", o.patch_size, "backbone.");
    read(b, "embed_dim", o.embed_dim, "backbone.");
    read(b, "depth", o.depth, "backbone.");
    read(b, "heads", o.heads, "backbone.");
    read(b, "num_source_classes", o.num_source_classes, "backbone.");
    read(b, "seed", o.seed, "backbone.");
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown(p, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "seed", "flip"}, "pretrain.");
    auto& o = c.pretrain;
    read(p, "epochs", o.epochs, "pretrain.");
    read(p, "batch_size", o.batch_size, "pretrain.");
    read(p, "lr", o.lr, "pretrain.");
    read(p, "momentum", o.momentum, "pretrain.");
    read(p, "weight_decay", o.weight_decay, "pretrain.");
    read(p, "seed", o.seed, "pretrain.");
    read(p, "flip", o.flip, "pretrain.");
  }
  read(j, "design", c.design, "");
  std::string transform = to_string(c.transform);
  read(j, "transform", transform, "");
  c.transform = parse_transform_kind(transform);
  read(j, "rank", c.rank, "");
  read(j, "pad_size", c.pad_size, "");
  read(j, "pad_width", c.pad_width, "");
  read(j, "grid", c.grid, "");
  read(j, "inner", c.inner, "");
  read(j, "tile", c.tile, "");
  read(j, "init_std", c.init_std, "");
  read(j, "epochs", c.epochs, "");
  read(j, "batch_size", c.batch_size, "");
  read(j, "lr", c.lr, "");
  read(j, "momentum", c.momentum, "");
  read(j, "weight_decay", c.weight_decay, "");
  read(j, "cosine", c.cosine, "");
  read(j, "flip", c.flip, "");
  read(j, "prompt_space", c.prompt_space, "");
  read(j, "map_split", c.map_split, "");
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  read(j, "eval_workers", c.eval_workers, "");
  read(j, "canonical", c.canonical, "");
  read(j, "seeds", c.seeds, "");
  read(j, "ranks", c.ranks, "");
}

inline ExperimentConfig parse_config(const std::string& text, Profile profile = Profile::kDesk) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto c = ExperimentConfig::defaults(profile);
  apply_json(c, j);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, Profile profile = Profile::kDesk) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), profile);
}

}  // namespace lorvp
