#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>

#include "gp/particles.hpp"
#include "gp/pattern.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("gp_cli_" + std::to_string(::getpid()));

int run(const std::string& args) {
  const std::string cmd = "GP_DATA_DIR=" + (kRoot / "data").string() + " " GP_CLI_PATH " " + args + " >" +
                          (kRoot / "stdout.txt").string() + " 2>" + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("--seed 1 dataset gen --n 4"), 0);
    ASSERT_EQ(run("--seed 1 train --iters 5 --width 8 --depth 1 --heads 2"), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
  static std::string model() { return (kRoot / "data" / "models" / "flow.ckpt").string(); }
};

}  // namespace

TEST_F(Cli, UnknownSubcommandOrFlagExitsOneWithUsage) {
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("sample --model " + model() + " --bogus 3"), 1);
  EXPECT_NE(slurp(kRoot / "stderr.txt").find("Usage"), std::string::npos);
  EXPECT_EQ(run(""), 1);
}

TEST_F(Cli, SampleIsDeterministic) {
  const auto a = kRoot / "a.json", b = kRoot / "b.json";
  ASSERT_EQ(run("sample --model " + model() + " --n 32 --seed 7 --out " + a.string()), 0);
  ASSERT_EQ(run("sample --model " + model() + " --n 32 --seed 7 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  ASSERT_EQ(run("sample --model " + model() + " --n 32 --seed 8 --out " + b.string()), 0);
  EXPECT_NE(slurp(a), slurp(b));
}

TEST_F(Cli, SilhouetteWithoutCameraIsAValidationError) {
  const auto obs = kRoot / "obs2.json";
  gp::write_json_file(obs.string(), {{"points", {{0, 1}, {1, 0}, {2, 2}}}});
  EXPECT_EQ(run("dps --model " + model() + " --task silhouette --observation " + obs.string()), 1);
  EXPECT_NE(slurp(kRoot / "stderr.txt").find("camera"), std::string::npos);
  EXPECT_EQ(run("dps --model " + model() + " --task silhouette --camera front --T 5 --observation " + obs.string()), 0);
}

TEST_F(Cli, RuntimeFailureExitsTwo) {
  const auto sparse = kRoot / "sparse.json";
  gp::write_json_file(sparse.string(),
                      {{"points", {{0, 0, 0, 0, 0}, {50, 0, 0, 0, 0}, {0, 90, 0, 0, 0}}}, {"flags", {1, 1, 1}}});
  EXPECT_EQ(run("recover --in " + sparse.string()), 2);
  EXPECT_EQ(run("recover --in " + (kRoot / "missing.json").string()), 1);
}

TEST_F(Cli, ConfigFileSuppliesOptionDefaults) {
  const auto cfg = kRoot / "gp.ini";
  std::ofstream(cfg) << "seed = 3\n[sample]\nn = 11\n";
  const auto out = kRoot / "cfg.json";
  ASSERT_EQ(run("--config " + cfg.string() + " sample --model " + model() + " --out " + out.string()), 0);
  EXPECT_EQ(gp::GarmentParticles::from_json(gp::read_json_file(out.string())).size(), 11);
}

TEST_F(Cli, BuildReproducesDatasetParticlesFromMetadata) {
  const fs::path ds = kRoot / "data" / "datasets" / "synthetic";
  const fs::path in = kRoot / "garments";
  fs::create_directories(in);
  std::string first;
  for (const auto& e : fs::directory_iterator(ds))
    if (e.is_directory()) {
      first = e.path().filename().string();
      fs::copy_file(e.path() / "meta.json", in / (first + ".json"));
      break;
    }
  ASSERT_FALSE(first.empty());
  ASSERT_EQ(run("build --in " + in.string() + " --out " + (kRoot / "built").string()), 0);
  const auto a = gp::read_json_file((ds / first / "particles.json").string());
  const auto b = gp::read_json_file((kRoot / "built" / first / "particles.json").string());
  EXPECT_EQ(a, b);
}

TEST_F(Cli, RecoverAndEvaluateWriteJson) {
  const fs::path ds = kRoot / "data" / "datasets" / "synthetic";
  ASSERT_EQ(run("evaluate recovery --data " + ds.string() + " --out " + (kRoot / "eval.json").string()), 0);
  const auto j = gp::read_json_file((kRoot / "eval.json").string());
  EXPECT_GE(j.at("panel_accuracy").get<double>(), 75.0);
  ASSERT_EQ(run("interpolate --model " + model() + " --a 1 --b 2 --count-a 10 --count-b 14 --steps 3 --T 4 --out " +
                (kRoot / "interp").string()),
            0);
  EXPECT_TRUE(fs::exists(kRoot / "interp" / "s_002.json"));
}

TEST_F(Cli, GradcheckPasses) { EXPECT_EQ(run("gradcheck --out " + (kRoot / "gc.json").string()), 0); }
