#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace lorvp {

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

using History = std::vector<EpochMetrics>;

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// `epoch,split,loss,accuracy`, six decimals, one row per record.
inline std::string metrics_csv(const History& history) {
  std::string out = "epoch,split,loss,accuracy\n";
  for (const auto& m : history) {
    out += std::to_string(m.epoch) + "," + m.split + "," + fixed6(m.loss) + "," + fixed6(m.accuracy) + "\n";
  }
  return out;
}

}  // namespace lorvp
