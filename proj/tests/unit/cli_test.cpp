#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lorvp/cli/commands.hpp"
#include "lorvp/errors.hpp"

namespace lorvp {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("lorvp_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Resolve, FlagsOverrideTheConfigFile) {
  auto dir = temp_dir("resolve");
  write(dir / "c.json", R"({"epochs": 3, "seed": 5, "output_dir": "from_file"})");
  cli::Options o;
  o.config_path = (dir / "c.json").string();
  EXPECT_EQ(cli::resolve(o).seed, 5u);
  EXPECT_EQ(cli::resolve(o).output_dir, "from_file");
  o.seed = 8;
  o.out = "from_flag";
  o.canonical = true;
  auto c = cli::resolve(o);
  EXPECT_EQ(c.seed, 8u);
  EXPECT_EQ(c.output_dir, "from_flag");
  EXPECT_TRUE(c.canonical);
  EXPECT_EQ(c.epochs, 3u);
}

TEST(Resolve, ProfileSetsDefaultsAndFileStillWins) {
  cli::Options o;
  o.profile = "paper";
  EXPECT_EQ(cli::resolve(o).backbone.resolution, 224u);
  auto dir = temp_dir("profile");
  write(dir / "c.json", R"({"epochs": 4})");
  o.config_path = (dir / "c.json").string();
  auto c = cli::resolve(o);
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_EQ(c.batch_size, 256u);
  o.profile = "laptop";
  EXPECT_THROW(cli::resolve(o), ConfigError);
}

TEST(Resolve, InvalidConfigMapsToConfigExitCode) {
  auto dir = temp_dir("invalid");
  write(dir / "c.json", R"({"momentum": 1.5})");
  cli::Options o;
  o.config_path = (dir / "c.json").string();
  try {
    cli::resolve(o);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_EQ(exit_code(e), 2);
  }
}

TEST(ReportCommand, BuildsEfficiencyTableFromReports) {
  auto dir = temp_dir("report");
  write(dir / "a.json", R"({"design": "lorvp", "transform": "lp", "epochs_run": 10, "wall_time_s": 1.5,
                            "vp_param_count": 768, "tunable_param_count": 1418, "final_accuracy": 0.9})");
  write(dir / "b.json", R"({"design": "pad", "transform": "lp", "epochs_run": 10, "wall_time_s": 2,
                            "vp_param_count": 2100, "tunable_param_count": 2750, "final_accuracy": 0.5})");
  cli::Options o;
  o.reports = {(dir / "a.json").string(), (dir / "b.json").string()};
  o.out = (dir / "out").string();
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(cli::report(o), 0);
  const auto printed = ::testing::internal::GetCapturedStdout();
  const auto csv = slurp(dir / "out" / "efficiency.csv");
  EXPECT_EQ(printed, csv);
  EXPECT_EQ(csv,
            "design,transform,epochs,wall_time_s,vp_param_count,tunable_param_count,accuracy\n"
            "lorvp,lp,10,1.500000,768,1418,0.900000\n"
            "pad,lp,10,2.000000,2100,2750,0.500000\n");
}

TEST(ReportCommand, BadInputsAreTypedErrors) {
  auto dir = temp_dir("report_bad");
  cli::Options o;
  EXPECT_THROW(cli::report(o), ConfigError);
  o.reports = {(dir / "missing.json").string()};
  EXPECT_THROW(cli::report(o), DataError);
  write(dir / "broken.json", "{nope");
  o.reports = {(dir / "broken.json").string()};
  EXPECT_THROW(cli::report(o), FormatError);
  write(dir / "partial.json", R"({"design": "lorvp"})");
  o.reports = {(dir / "partial.json").string()};
  EXPECT_THROW(cli::report(o), FormatError);
}

}  // namespace
}  // namespace lorvp
