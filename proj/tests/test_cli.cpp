#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "quadkit/formats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "quadkit_cli_stdout.txt";
  const std::string cmd = std::string(QUADKIT_CLI) + " " + args + " > " + log.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = quadkit::formats::read_text(log);
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / "quadkit_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, SynthExtractAndPtrack) {
  ASSERT_EQ(run("synth --out " + p("s") + " --perturb variance_change --magnitude 1").code, 0);
  for (const char* f : {"frames.qtn", "tracks.json", "trajectories.json", "meta.json", "frame_000.pgm"})
    EXPECT_TRUE(fs::exists(dir / "s" / f)) << f;
  ASSERT_EQ(run("extract-jitter --tracks " + p("s/tracks.json") + " --out " + p("jit.json")).code, 0);
  EXPECT_TRUE(fs::exists(dir / "jit.spectrum.json"));
  EXPECT_EQ(quadkit::formats::read_jitter(dir / "jit.json").values.size(), 8u);

  const CliResult same = run("ptrack --real " + p("s/trajectories.json") + " --gen " + p("s/trajectories.json"));
  ASSERT_EQ(same.code, 0);
  EXPECT_EQ(json::parse(same.out).at("ptrack").get<double>(), 0.0);
  const CliResult diff = run("ptrack --real " + p("s/trajectories.json") + " --gen " + p("s/perturbed/trajectories.json"));
  ASSERT_EQ(diff.code, 0);
  EXPECT_GT(json::parse(diff.out).at("ptrack").get<double>(), 0.0);
}

TEST_F(Cli, MetricsOnFrames) {
  ASSERT_EQ(run("synth --out " + p("s")).code, 0);
  const CliResult r = run("metrics --a " + p("s/frame_000.pgm") + " --b " + p("s/frame_000.pgm"));
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_TRUE(j.at("psnr").is_null());
  EXPECT_EQ(j.at("ssim").get<double>(), 1.0);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  ASSERT_EQ(run("synth --out " + p("s")).code, 0);
  EXPECT_EQ(run("extract-jitter --tracks " + p("s/tracks.json") + " --out " + p("j.json") + " --cutoff 0").code, 2);
  EXPECT_EQ(run("extract-jitter --tracks " + p("s/tracks.json") + " --out " + p("j.json") + " --track-id 9").code, 2);
  EXPECT_EQ(run("ptrack --real " + p("missing.json") + " --gen " + p("missing.json")).code, 2);
  EXPECT_EQ(run("synth --bogus-flag").code, 2);
  quadkit::formats::write_text(dir / "bad.json", R"({"cutof_hz": 0.3})");
  EXPECT_EQ(run("--config " + p("bad.json") + " synth --out " + p("t")).code, 2);
  EXPECT_EQ(run("synth --out " + p("t") + " --perturb sideways").code, 2);
}

TEST_F(Cli, GradcheckReportsEveryBlock) {
  const CliResult r = run("gradcheck --trials 1");
  EXPECT_EQ(r.code, 0);
  for (const char* b : {"mask_embed", "s6_scan", "enhancer_forward", "full_loss"})
    EXPECT_NE(r.out.find(b), std::string::npos) << b;
}
