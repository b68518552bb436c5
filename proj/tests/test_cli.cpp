#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "hicov_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(HICOV_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  void TearDown() override { fs::remove_all(kWork); }
};

}  // namespace

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("selftest"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("mc-fwer --bogus"), 1);
  EXPECT_EQ(run("analyze --prices " + (kWork / "missing.csv").string()), 2);
  EXPECT_EQ(run("mc-fwer --M 0 --out-dir " + kWork.string()), 2);
}

TEST_F(Cli, SimulateThenAnalyze) {
  const fs::path csv = kWork / "path.csv";
  ASSERT_EQ(run("simulate --n 78 --d 9 --num-blocks 2 --rho-gamma 0.5 --seed 3 --out " + csv.string() + " --truth " +
                (kWork / "truth.json").string()),
            0);
  EXPECT_TRUE(fs::exists(kWork / "path.resolved.cfg"));
  EXPECT_TRUE(fs::exists(kWork / "truth.json"));
  {
    std::ofstream s(kWork / "sectors.csv");
    s << "asset,sector\n";
    for (int k = 1; k <= 8; ++k) s << "Y" << k << "," << (k <= 4 ? "A" : "B") << "\n";
  }
  const fs::path out = kWork / "report";
  ASSERT_EQ(run("analyze --prices " + csv.string() + " --factor FACTOR --sectors " + (kWork / "sectors.csv").string() +
                " --alpha 0.05 --B 99 --out-dir " + out.string()),
            0);
  for (const char* f : {"matrix.csv", "groups.json", "meta.json", "resolved.cfg"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_NE(slurp(out / "groups.json").find("\"A|B\""), std::string::npos);

  // Rerunning from the echoed config reproduces the outputs.
  const fs::path again = kWork / "again";
  ASSERT_EQ(run("analyze --config " + (out / "resolved.cfg").string() + " --out-dir " + again.string()), 0);
  EXPECT_EQ(slurp(out / "groups.json"), slurp(again / "groups.json"));
  EXPECT_EQ(slurp(out / "matrix.csv"), slurp(again / "matrix.csv"));
}

TEST_F(Cli, SimulateIsReproducibleFromEcho) {
  ASSERT_EQ(run("simulate --n 39 --d 5 --num-blocks 2 --seed 4 --out " + (kWork / "a.csv").string()), 0);
  ASSERT_EQ(run("simulate --config " + (kWork / "a.resolved.cfg").string() + " --out " + (kWork / "b.csv").string()), 0);
  EXPECT_EQ(slurp(kWork / "a.csv"), slurp(kWork / "b.csv"));
}

TEST_F(Cli, ConfigPrecedenceAndSeedFallback) {
  {
    std::ofstream c(kWork / "desk.toml");
    c << "d_under = 4\nnum_blocks = 2\nn_grid = [39]\nM = 4\nB = 19\nfine_factor = 2\nseed = 9\n";
  }
  const std::string cfg = (kWork / "desk.toml").string();
  ASSERT_EQ(run("mc-fwer --config " + cfg + " --M 3 --out-dir " + (kWork / "o").string()), 0);
  const std::string echo = slurp(kWork / "o" / "resolved.cfg");
  EXPECT_NE(echo.find("M = 3\n"), std::string::npos);
  EXPECT_NE(echo.find("B = 19\n"), std::string::npos);
  EXPECT_NE(echo.find("seed = 9\n"), std::string::npos);

  ASSERT_EQ(run("mc-fwer --config " + cfg + " --set seed=5 --out-dir " + (kWork / "p").string()), 0);
  EXPECT_NE(slurp(kWork / "p" / "resolved.cfg").find("seed = 5\n"), std::string::npos);

  ::setenv("HICOV_SEED", "77", 1);
  ASSERT_EQ(run("mc-fwer --set d_under=4 --set num_blocks=2 --M 2 --B 19 --set n_grid=[39] --out-dir " +
                (kWork / "q").string()),
            0);
  ::unsetenv("HICOV_SEED");
  EXPECT_NE(slurp(kWork / "q" / "resolved.cfg").find("seed = 77\n"), std::string::npos);
}

TEST_F(Cli, TestSubcommandWritesReport) {
  ASSERT_EQ(run("test --n 78 --d 7 --B 49 --set structure.num_blocks=3 --out-dir " + kWork.string()), 0);
  EXPECT_NE(slurp(kWork / "test.json").find("\"RW\""), std::string::npos);
  EXPECT_TRUE(fs::exists(kWork / "resolved.cfg"));
}
