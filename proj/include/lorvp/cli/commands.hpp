#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lorvp/harness/config.hpp"

namespace lorvp::cli {

/// Command-line values shared by every subcommand.
struct Options {
  std::string config_path;
  std::string out;
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  bool canonical = false;
  std::vector<std::size_t> ranks;
  std::vector<std::string> reports;
};

/// Profile defaults, then the config file, then flag overrides; validated.
ExperimentConfig resolve(const Options& o);

// Each returns the process exit code; errors propagate as exceptions.
int pretrain(const Options& o);
int adapt(const Options& o);
int compare(const Options& o);
int rank_sweep(const Options& o);
int gradcheck(const Options& o);
int report(const Options& o);

}  // namespace lorvp::cli
