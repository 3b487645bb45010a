#include <CLI11.hpp>

#include <cstdio>

#include "lorvp/cli/commands.hpp"

using namespace lorvp;

int main(int argc, char** argv) {
  CLI::App app{"Low-rank visual prompting toolkit"};
  app.require_subcommand(1);
  cli::Options o;
  app.add_option("--config", o.config_path, "JSON experiment config");
  app.add_option("--seed", o.seed, "Run seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--profile", o.profile, "Default budget: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_flag("--canonical", o.canonical, "Deterministic output (wall time written as 0)");
  app.fallthrough();

  auto* pre = app.add_subcommand("pretrain", "Pretrain and freeze a backbone on the source task");
  auto* adapt = app.add_subcommand("adapt", "Train a prompt and output transform on the target task");
  auto* compare = app.add_subcommand("compare", "Compare all prompt designs under one budget");
  auto* sweep = app.add_subcommand("rank-sweep", "LoR-VP accuracy and size per rank");
  sweep->add_option("--ranks", o.ranks, "Ranks to run (overrides the config)")->delimiter(',');
  auto* grad = app.add_subcommand("gradcheck", "Check prompt and head gradients against finite differences");
  auto* report = app.add_subcommand("report", "Efficiency table from report.json files");
  report->add_option("reports", o.reports, "report.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (*pre) return cli::pretrain(o);
    if (*adapt) return cli::adapt(o);
    if (*compare) return cli::compare(o);
    if (*sweep) return cli::rank_sweep(o);
    if (*grad) return cli::gradcheck(o);
    if (*report) return cli::report(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lorvp: %s\n", e.what());
    return exit_code(e);
  }
  return 0;
}
