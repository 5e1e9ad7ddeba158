#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlatmi/io.hpp"

#ifndef MLATMI_CLI_PATH
#error "MLATMI_CLI_PATH must point at the mlatmi executable"
#endif

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mlatmi_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MLATMI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return mlatmi::io::read_text_file(p.string()); }

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "cfg.json";
  std::ofstream(p) << body;
  return p;
}

// One 0.5 m cell, two anchors: everything runs in milliseconds.
std::string tiny_config(const fs::path& out) {
  return R"({"room": {"shape": "square", "side": 0.5}, "cell_size": 0.5,
    "placement": {"id": "t", "anchors": [[0.1, 0.1], [0.4, 0.4]]},
    "realizations": 50, "mine": {"epochs": 10, "window": 5, "batch": 16},
    "output_dir": ")" + out.string() + R"(", "seed": 3})";
}

std::string small_config(const fs::path& out) {
  return R"({"room": {"shape": "square", "side": 1.0}, "cell_size": 0.25,
    "placement": {"id": "s", "anchors": [[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]]},
    "realizations": 20, "mine": {"epochs": 20, "window": 5, "batch": 16},
    "output_dir": ")" + out.string() + R"(", "seed": 4})";
}

std::vector<std::pair<std::string, std::string>> xy_columns(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::string line;
  std::vector<std::pair<std::string, std::string>> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream row(line);
    std::string x;
    std::string y;
    std::getline(row, x, ',');
    std::getline(row, y, ',');
    out.emplace_back(x, y);
  }
  return out;
}

}  // namespace

TEST(Cli, SingleCellMcMi) {
  const auto dir = scratch("single");
  const auto cfg = write_config(dir, tiny_config(dir / "out"));
  ASSERT_EQ(run("mc-mi -c " + cfg.string()), 0);
  const auto est = nlohmann::json::parse(slurp(dir / "out" / "estimate.json"));
  EXPECT_NEAR(est["value"].get<double>(), 0.0, 1e-12);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  const auto missing = write_config(dir, R"({"cell_size": 0.2})");
  EXPECT_EQ(run("mc-mi -c " + missing.string()), 2);
  EXPECT_EQ(run("mc-mi -c " + (dir / "absent.json").string()), 4);
  EXPECT_EQ(run("bogus-command"), 2);
  EXPECT_EQ(run("mc-mi"), 2);
  const auto cfg = write_config(dir, tiny_config(dir / "out"));
  EXPECT_EQ(run("mine-finetune -c " + cfg.string() + " --parent " + (dir / "nope.json").string()), 4);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, small_config(dir / "out"));
  ASSERT_EQ(run("mc-mi -c " + cfg.string() + " -o " + (dir / "a").string()), 0);
  ASSERT_EQ(run("mc-mi -c " + cfg.string() + " -o " + (dir / "b").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "mi_map.csv"), slurp(dir / "b" / "mi_map.csv"));
  EXPECT_EQ(slurp(dir / "a" / "estimate.json"), slurp(dir / "b" / "estimate.json"));
}

TEST(Cli, ResumeMatchesUninterrupted) {
  const auto dir = scratch("resume");
  const auto cfg = write_config(dir, small_config(dir / "out"));
  ASSERT_EQ(run("mine-train -c " + cfg.string() + " --epochs 20 -o " + (dir / "full").string()), 0);
  ASSERT_EQ(run("mine-train -c " + cfg.string() + " --epochs 10 -o " + (dir / "half").string()), 0);
  ASSERT_EQ(run("mine-train -c " + cfg.string() + " --epochs 10 --resume " + (dir / "half" / "checkpoint.json").string() +
                " -o " + (dir / "rest").string()),
            0);
  std::istringstream full_in(slurp(dir / "full" / "trace.csv"));
  std::istringstream half_in(slurp(dir / "half" / "trace.csv"));
  std::istringstream rest_in(slurp(dir / "rest" / "trace.csv"));
  const auto full = mlatmi::io::read_trace(full_in);
  const auto half = mlatmi::io::read_trace(half_in);
  const auto rest = mlatmi::io::read_trace(rest_in);
  ASSERT_EQ(full.size(), 20u);
  ASSERT_EQ(half.size() + rest.size(), 20u);
  EXPECT_EQ(rest.first_epoch, 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(half.values[i], full.values[i], 1e-12);
    EXPECT_NEAR(rest.values[i], full.values[10 + i], 1e-12);
  }
}

TEST(Cli, EstimateFromTrace) {
  const auto dir = scratch("estimate");
  const auto cfg = write_config(dir, small_config(dir / "out"));
  ASSERT_EQ(run("mine-train -c " + cfg.string()), 0);
  ASSERT_EQ(run("mine-estimate -c " + cfg.string()), 0);
  const auto train = nlohmann::json::parse(slurp(dir / "out" / "estimate.json"));
  const auto est = nlohmann::json::parse(slurp(dir / "out" / "mine_estimate.json"));
  EXPECT_EQ(est["value"].get<double>(), train["value"].get<double>());
}

TEST(Cli, MapsShareTheGrid) {
  const auto dir = scratch("maps");
  const auto cfg = write_config(dir, small_config(dir / "out"));
  ASSERT_EQ(run("mc-mi -c " + cfg.string()), 0);
  ASSERT_EQ(run("peb-map -c " + cfg.string()), 0);
  ASSERT_EQ(run("mlat-rmse -c " + cfg.string()), 0);
  const auto mi = xy_columns(dir / "out" / "mi_map.csv");
  EXPECT_EQ(mi.size(), 16u);
  EXPECT_EQ(mi, xy_columns(dir / "out" / "peb_map.csv"));
  EXPECT_EQ(mi, xy_columns(dir / "out" / "rmse_map.csv"));
}

TEST(Cli, ManifestListsProducedFiles) {
  const auto dir = scratch("manifest");
  const auto cfg = write_config(dir, small_config(dir / "out"));
  ASSERT_EQ(run("peb-map -c " + cfg.string()), 0);
  ASSERT_EQ(run("study-correlation -c " + cfg.string()), 0);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  const auto files = m["files"].get<std::vector<std::string>>();
  EXPECT_EQ(files.size(), 3u);
  EXPECT_EQ(std::count(files.begin(), files.end(), "peb_map.csv"), 0);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_FALSE(m["config_hash"].get<std::string>().empty());
}
