// Copyright 2026 The ofo-sens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "ofo_sens/csv.hpp"

namespace ofo_sens {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = OFO_SENS_SOURCE_DIR;

class Cli : public ::testing::Test
{
protected:
  fs::path dir;

  void SetUp() override
  {
    const auto * info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("ofo_sens_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  void TearDown() override { fs::remove_all(dir); }

  /// Runs the tool with stdout and stderr captured; returns the exit code.
  int tool(const std::string & args) const
  {
    const std::string cmd = std::string("\"") + OFO_SENS_CLI + "\" " + args + " >\"" + (dir / "stdout.txt").string() +
                            "\" 2>\"" + (dir / "stderr.txt").string() + "\"";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string stdout_text() const { return read_file(dir / "stdout.txt"); }

  static std::string config(const std::string & name) { return "--config \"" + (kSource / "configs" / name).string() + "\""; }

  std::string out(const std::string & sub) const { return "--out \"" + (dir / sub).string() + "\""; }
};

TEST_F(Cli, ToyRunWritesOneRowPerStep)
{
  ASSERT_EQ(tool("run " + config("toy_alpha.toml") + " " + out("a")), 0);
  const auto rows = parse_csv(read_file(dir / "a" / "trajectory.csv"));
  ASSERT_EQ(rows.size(), 52u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"k", "u_1", "y_1", "phi", "degenerate"}));
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[51][0], "50");
  EXPECT_TRUE(fs::exists(dir / "a" / "sensitivity_total.csv"));
  EXPECT_FALSE(fs::exists(dir / "a" / "heatmap.csv"));
}

TEST_F(Cli, MissingConfigExitsWithConfigErrorAndWritesNothing)
{
  EXPECT_EQ(tool("run --config \"" + (dir / "nope.toml").string() + "\" " + out("x")), 2);
  EXPECT_FALSE(fs::exists(dir / "x"));
}

TEST_F(Cli, BadArgumentsExitWithConfigError)
{
  EXPECT_EQ(tool("run"), 2);
  EXPECT_EQ(tool("frobnicate"), 2);
  EXPECT_EQ(tool("run " + config("toy_alpha.toml") + " --record everything " + out("r")), 2);
  EXPECT_EQ(tool("heatmap " + config("toy_alpha.toml") + " " + out("h")), 2);
  EXPECT_EQ(tool("validate " + config("toy_alpha.toml") + " --param mismatch " + out("v")), 2);
  EXPECT_EQ(tool("validate " + config("toy_alpha.toml") + " --scheme sideways " + out("v")), 2);
}

TEST_F(Cli, RunsAreDeterministic)
{
  ASSERT_EQ(tool("run " + config("gaslift_coupling.toml") + " " + out("a")), 0);
  ASSERT_EQ(tool("run " + config("gaslift_coupling.toml") + " " + out("b")), 0);
  for (const char * f : {"trajectory.csv", "sensitivity_total.csv"}) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
}

TEST_F(Cli, GasLiftRunMatchesGoldenFiles)
{
  ASSERT_EQ(tool("run " + config("gaslift.toml") + " " + out("g")), 0);
  for (const char * f : {"trajectory.csv", "sensitivity_total.csv"}) {
    EXPECT_EQ(read_file(dir / "g" / f), read_file(kSource / "tests" / "golden" / f)) << f;
  }
}

TEST_F(Cli, HeatmapHoldsOnlyPastSteps)
{
  ASSERT_EQ(tool("heatmap " + config("gaslift.toml") + " --record instantaneous --well 2 " + out("h")), 0);
  const auto rows = parse_csv(read_file(dir / "h" / "heatmap.csv"));
  ASSERT_EQ(rows.size(), 1u + 500u * 501u / 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"k", "s", "target", "value"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_LT(std::stoi(rows[i][1]), std::stoi(rows[i][0])) << "line " << i + 1;
    ASSERT_EQ(rows[i][2], "mismatch_2");
  }
  const std::string text = stdout_text();
  EXPECT_NE(text.find("Q1 k=1 s=0 value="), std::string::npos);
  EXPECT_NE(text.find("Q3 k=500 s=299 value="), std::string::npos);
}

TEST_F(Cli, ValidateWritesTheComparisonTable)
{
  ASSERT_EQ(tool("validate " + config("toy_u0.toml") + " " + out("v")), 0);
  const auto rows = parse_csv(read_file(dir / "v" / "validation.csv"));
  ASSERT_GT(rows.size(), 100u);
  EXPECT_EQ(
    rows[0], (std::vector<std::string>{"target", "param_index", "s", "analytic", "fd", "abs_err", "rel_err", "excluded_reason"}));
  EXPECT_NE(stdout_text().find("PASS"), std::string::npos);
}

TEST_F(Cli, SweepCoversTheGrid)
{
  ASSERT_EQ(tool("sweep " + config("toy_g.toml") + " --jobs 2 " + out("s")), 0);
  const auto rows = parse_csv(read_file(dir / "s" / "sweep.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"horizon", "parameter", "value", "phi", "param_index", "dphi"}));
  EXPECT_EQ(rows.size(), 1u + 3u * 80u);
}

}  // namespace
}  // namespace ofo_sens
