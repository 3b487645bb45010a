#include "lorvp/cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lorvp/harness/gradcheck.hpp"
#include "lorvp/harness/studies.hpp"

namespace lorvp::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

ExperimentConfig resolve(const Options& o) {
  const auto profile = parse_profile(o.profile);
  auto c = o.config_path.empty() ? ExperimentConfig::defaults(profile) : load_config(o.config_path, profile);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.canonical) c.canonical = true;
  c.validate();
  return c;
}

int pretrain(const Options& o) {
  auto c = resolve(o);
  if (o.seed) c.backbone.seed = c.pretrain.seed = *o.seed;
  const fs::path dir = c.output_dir.empty() ? fs::path(".") : fs::path(c.output_dir);
  const fs::path ckpt = c.checkpoint.empty() ? dir / "backbone.lvpk" : fs::path(c.checkpoint);
  auto cfg = c;
  cfg.checkpoint.clear();
  History history;
  auto model = obtain_backbone(cfg, &history);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint(model, ckpt);
  write_text(dir / "pretrain_metrics.csv", metrics_csv(history));
  const double acc = history.empty() ? 0.0 : history.back().accuracy;
  std::printf("pretrained %s (%zu params), train accuracy %.4f -> %s\n", to_string(c.backbone.kind).c_str(),
              model.params().element_count(), acc, ckpt.string().c_str());
  return 0;
}

int adapt(const Options& o) {
  const auto r = run_adaptation(resolve(o));
  std::printf("%s + %s: accuracy %.4f (epoch %zu), baseline %.4f, vp params %zu, tunable %zu\n",
              r.design_label.c_str(), to_string(r.config.transform).c_str(), r.final_accuracy, r.best_epoch,
              r.baseline_accuracy, r.vp_param_count, r.tunable_param_count);
  if (r.config.output_dir.empty()) std::cout << report_json(r).dump(2) << "\n";
  return 0;
}

int compare(const Options& o) {
  const auto c = resolve(o);
  auto model = obtain_backbone(c);
  const auto table = compare_designs(c, model, load_target(c.dataset));
  const auto csv = compare_csv(table);
  std::cout << csv;
  if (!c.output_dir.empty()) {
    write_text(fs::path(c.output_dir) / "compare.csv", csv);
    write_text(fs::path(c.output_dir) / "efficiency.csv", efficiency_report(table.reports));
  }
  return 0;
}

int rank_sweep(const Options& o) {
  const auto c = resolve(o);
  auto model = obtain_backbone(c);
  const auto rows = lorvp::rank_sweep(c, model, load_target(c.dataset), o.ranks.empty() ? c.ranks : o.ranks);
  const auto csv = rank_sweep_csv(rows);
  std::cout << csv;
  if (!c.output_dir.empty()) write_text(fs::path(c.output_dir) / "rank_sweep.csv", csv);
  return 0;
}

int gradcheck(const Options& o) {
  const auto r = lorvp::gradcheck(resolve(o));
  std::cout << r.summary();
  std::printf("gradcheck %s: max relative error %.3e (tolerance %.0e)\n", r.passed ? "passed" : "FAILED",
              r.max_error, r.tolerance);
  return r.passed ? 0 : 4;
}

int report(const Options& o) {
  if (o.reports.empty()) throw ConfigError("report: pass one or more report.json files");
  std::vector<EfficiencyRow> rows;
  for (const auto& path : o.reports) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    Json j;
    try {
      j = Json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(FormatError::Kind::kMalformed, path + ": " + e.what());
    }
    rows.push_back(efficiency_row(j));
  }
  const auto csv = efficiency_report(rows);
  std::cout << csv;
  if (!o.out.empty()) write_text(fs::path(o.out) / "efficiency.csv", csv);
  return 0;
}

}  // namespace lorvp::cli
