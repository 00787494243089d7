#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "emplace/geo_io.hpp"
#include "emplace/mining.hpp"
#include "tempdir.hpp"

namespace {

struct Run {
  int code;
  std::string output;
};

// Runs the CLI with stderr folded into the captured output.
Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + EMPLACE_CLI_PATH + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

const std::string kSmallCity =
    " --set synth.n_regions=2 --set synth.n_areas=2 --set synth.clusters_per_region=25 --seed 5";

}  // namespace

TEST(Cli, PrintConfigListsEveryKey) {
  const auto r = run("--print-config");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("[train]"), std::string::npos);
  EXPECT_NE(r.output.find("lr = "), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("cluster --bogus-flag").code, 2);
  const auto r = run("cluster --set train.nonsense=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("error kind=config code=2"), std::string::npos);
  EXPECT_EQ(run("cluster --set detect.window=99x99").code, 2);
}

TEST(Cli, MissingInputExitsThree) {
  testing_support::TempDir dir;
  const auto r = run("cluster --data-dir " + (dir / "nowhere").string() + " --out-dir " + (dir / "out").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("error kind=data code=3"), std::string::npos);
}

TEST(Cli, FlagOverridesEnvironmentDataDir) {
  testing_support::TempDir dir;
  const auto data = (dir / "data").string();
  ASSERT_EQ(run("synth --data-dir " + data + kSmallCity).code, 0);
  const std::string out = " --out-dir " + (dir / "out").string();
  EXPECT_EQ(run("cluster" + out, "EMPLACE_DATA_DIR=" + data).code, 0);
  EXPECT_EQ(run("cluster --data-dir " + data + out, "EMPLACE_DATA_DIR=/nonexistent").code, 0);
  EXPECT_EQ(run("cluster" + out, "EMPLACE_DATA_DIR=/nonexistent").code, 3);
}

TEST(Cli, MineCountMatchesBruteForceRecount) {
  testing_support::TempDir dir;
  const std::string common = " --data-dir " + (dir / "data").string() + " --out-dir " + (dir / "out").string();
  ASSERT_EQ(run("synth" + common + kSmallCity).code, 0);
  ASSERT_EQ(run("cluster" + common).code, 0);
  const auto r = run("mine --si SI-2" + common);
  ASSERT_EQ(r.code, 0) << r.output;

  const auto clusters = emplace::geo::read_clusters_jsonl(dir / "out" / "clusters.jsonl");
  std::size_t expected = 0;
  for (const auto& c : clusters) {
    const auto& m = c.members;
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) {
        for (std::size_t k = 0; k < m.size(); ++k) {
          const int ap = m[j].timestamp - m[i].timestamp;
          const int an = m[k].timestamp - m[i].timestamp;
          if (ap > 0 && m[k].timestamp > m[j].timestamp && ap > 275 && ap < 475 && an > 750) ++expected;
        }
      }
    }
  }
  EXPECT_GT(expected, 0u);
  EXPECT_EQ(line_count(dir / "out" / "triplets.jsonl"), expected);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "split.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "mine_report.json"));
}
