#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lorvp/harness/experiment.hpp"

namespace lorvp {

struct CompareRow {
  std::string design;
  std::string transform;
  std::size_t epochs = 0;
  std::vector<std::uint64_t> seeds;
  std::size_t vp_param_count = 0;
  std::size_t tunable_param_count = 0;
  std::vector<double> accuracies;  // per seed, final (best-epoch) accuracy
  double mean_accuracy = 0.0;
  double mean_baseline = 0.0;
};

struct CompareTable {
  std::vector<CompareRow> rows;  // ranked by mean accuracy, best first
  std::vector<Report> reports;
};

inline std::vector<std::uint64_t> seeds_of(const ExperimentConfig& c) {
  return c.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.seeds;
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ";" : "") + std::to_string(seeds[i]);
  return s;
}

/// All five prompt designs with the configured transform, plus a
/// prompt-free LP baseline, each over the same seeds and budget. Runs are
/// sequential.
inline CompareTable compare_designs(const ExperimentConfig& base, Backbone<float>& model, const TaskData& data) {
  CompareTable table;
  const auto seeds = seeds_of(base);
  const std::vector<std::string> designs{"pad", "patch_pad", "patch_free", "patch_same", "lorvp", "none"};
  for (const auto& design : designs) {
    CompareRow row;
    row.design = design;
    row.seeds = seeds;
    row.epochs = base.epochs;
    for (auto seed : seeds) {
      auto c = base;
      c.design = design;
      c.seed = seed;
      if (design == "none") c.transform = TransformKind::kLP;
      if (!base.output_dir.empty()) {
        c.output_dir = (std::filesystem::path(base.output_dir) / design / ("seed" + std::to_string(seed))).string();
      }
      auto r = adapt(c, model, data);
      row.transform = to_string(c.transform);
      row.vp_param_count = r.vp_param_count;
      row.tunable_param_count = r.tunable_param_count;
      row.accuracies.push_back(r.final_accuracy);
      row.mean_baseline += r.baseline_accuracy / static_cast<double>(seeds.size());
      table.reports.push_back(std::move(r));
    }
    for (double a : row.accuracies) row.mean_accuracy += a / static_cast<double>(seeds.size());
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const CompareRow& a, const CompareRow& b) { return a.mean_accuracy > b.mean_accuracy; });
  return table;
}

inline std::string compare_csv(const CompareTable& t) {
  std::string out =
      "rank,design,transform,epochs,seeds,vp_param_count,tunable_param_count,mean_accuracy,mean_baseline_accuracy\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out += std::to_string(i + 1) + "," + r.design + "," + r.transform + "," + std::to_string(r.epochs) + "," +
           join_seeds(r.seeds) + "," + std::to_string(r.vp_param_count) + "," +
           std::to_string(r.tunable_param_count) + "," + fixed6(r.mean_accuracy) + "," + fixed6(r.mean_baseline) +
           "\n";
  }
  return out;
}

struct RankRow {
  std::size_t rank = 0;
  double accuracy = 0.0;
  double last_accuracy = 0.0;
  std::size_t vp_param_count = 0;
  std::size_t tunable_param_count = 0;
};

/// One LoRVP run per rank with a shared seed.
inline std::vector<RankRow> rank_sweep(const ExperimentConfig& base, Backbone<float>& model, const TaskData& data,
                                       const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw ConfigError("rank sweep needs at least one rank");
  std::vector<RankRow> rows;
  for (auto r : ranks) {
    auto c = base;
    c.design = "lorvp";
    c.rank = r;
    if (!base.output_dir.empty()) {
      c.output_dir = (std::filesystem::path(base.output_dir) / ("rank" + std::to_string(r))).string();
    }
    const auto report = adapt(c, model, data);
    rows.push_back({r, report.final_accuracy, report.last_accuracy, report.vp_param_count,
                    report.tunable_param_count});
  }
  return rows;
}

inline std::string rank_sweep_csv(const std::vector<RankRow>& rows) {
  std::string out = "rank,accuracy,last_accuracy,vp_param_count,tunable_param_count\n";
  for (const auto& r : rows) {
    out += std::to_string(r.rank) + "," + fixed6(r.accuracy) + "," + fixed6(r.last_accuracy) + "," +
           std::to_string(r.vp_param_count) + "," + std::to_string(r.tunable_param_count) + "\n";
  }
  return out;
}

struct EfficiencyRow {
  std::string design;
  std::string transform;
  std::size_t epochs = 0;
  double wall_time_s = 0.0;
  std::size_t vp_param_count = 0;
  std::size_t tunable_param_count = 0;
  double accuracy = 0.0;
};

inline EfficiencyRow efficiency_row(const Report& r) {
  return {r.design_label,     to_string(r.config.transform), r.epochs_run,     r.wall_time_s,
          r.vp_param_count,   r.tunable_param_count,         r.final_accuracy};
}

inline EfficiencyRow efficiency_row(const Json& report) {
  try {
    return {report.at("design").get<std::string>(),
            report.at("transform").get<std::string>(),
            report.at("epochs_run").get<std::size_t>(),
            report.at("wall_time_s").get<double>(),
            report.at("vp_param_count").get<std::size_t>(),
            report.at("tunable_param_count").get<std::size_t>(),
            report.at("final_accuracy").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("report json: ") + e.what());
  }
}

/// Epochs, time, prompt and tunable parameter counts, and accuracy per run.
inline std::string efficiency_report(const std::vector<EfficiencyRow>& rows) {
  if (rows.empty()) throw ContractError("efficiency report needs at least one run");
  std::string out = "design,transform,epochs,wall_time_s,vp_param_count,tunable_param_count,accuracy\n";
  for (const auto& r : rows) {
    out += r.design + "," + r.transform + "," + std::to_string(r.epochs) + "," + fixed6(r.wall_time_s) + "," +
           std::to_string(r.vp_param_count) + "," + std::to_string(r.tunable_param_count) + "," +
           fixed6(r.accuracy) + "\n";
  }
  return out;
}

inline std::string efficiency_report(const std::vector<Report>& reports) {
  std::vector<EfficiencyRow> rows;
  for (const auto& r : reports) rows.push_back(efficiency_row(r));
  return efficiency_report(rows);
}

}  // namespace lorvp
