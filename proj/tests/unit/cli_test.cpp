#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "transda/cli.hpp"

namespace fs = std::filesystem;
using transda::cli::Config;
using transda::cli::ConfigError;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "transda");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = transda::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Shared tiny run: trained once, read by several tests.
class CliRun : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "transda_unit_cli"; }
  static fs::path config() { return root() / "tiny.conf"; }
  static fs::path run_dir() { return root() / "run"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    std::ofstream(config()) << "epochs = 1\nlr = 0.05\nlr_final = 0.005\nseeds = 0,1,2\n"
                               "data.num_classes = 4\ndata.per_class = 40\ndata.image_size = 16\n"
                               "data.sources = clean\n";
    const Result r = run({"train-da", "--config", config().string(), "--strategy", "rnd-all", "--out",
                          run_dir().string(), "--quiet"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }
};

}  // namespace

TEST(Cli, HelpListsDefaults) {
  const Result r = run({"train-da", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const auto& d : Config::keys()) EXPECT_NE(r.out.find(d.key + " = "), std::string::npos) << d.key;
  EXPECT_NE(r.out.find("lr = 0.001"), std::string::npos);
}

TEST(Cli, ConfigurationErrorsExitOne) {
  const fs::path out = fs::temp_directory_path() / "transda_unit_cli_none";
  fs::remove_all(out);
  EXPECT_EQ(run({"train-da", "--config", "/nonexistent.conf", "--out", out.string()}).code, 1);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run({"train-dg", "--set", "no_such_key=1", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"train-dg", "--strategy", "sideways", "--out", out.string()}).code, 1);
  EXPECT_EQ(run({"train-dg", "--set", "epochs=-3", "--out", out.string()}).code, 1);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run({"no-such-command"}).code, 1);
  EXPECT_EQ(run({"eval"}).code, 1);  // --checkpoint is required
}

TEST(Cli, RuntimeFailuresExitTwo) {
  const fs::path bad = fs::temp_directory_path() / "transda_unit_bad_ckpt.txt";
  std::ofstream(bad) << "garbage\n";
  const Result r = run({"eval", "--checkpoint", bad.string()});
  fs::remove(bad);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ConfigResolution) {
  Config cfg;
  EXPECT_EQ(cfg.get("epochs"), "60");
  cfg.set("seeds", "4,5");
  EXPECT_EQ(cfg.get_seeds(), (std::vector<std::uint64_t>{4, 5}));
  cfg.set("sweep.lambda_c", "log:0.1:10:3");
  const auto grid = cfg.get_doubles("sweep.lambda_c");
  ASSERT_EQ(grid.size(), 3u);
  EXPECT_NEAR(grid[1], 1.0, 1e-12);
  EXPECT_THROW(cfg.set("bogus", "1"), ConfigError);
  transda::cli::apply_data_override(cfg, "target=rotated");
  EXPECT_EQ(cfg.get("data.target"), "rotated");
}

TEST(Cli, GradcheckSubset) {
  const Result r = run({"gradcheck", "--ops", "add,relu"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("add,"), std::string::npos);
  EXPECT_NE(r.out.find("relu,"), std::string::npos);
  EXPECT_EQ(r.out.find("conv2d"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--ops", "add", "--fault-op", "add"}).code, 2);
}

TEST_F(CliRun, ReportHoldsEverySeedAndMean) {
  const auto report = nlohmann::json::parse(slurp(run_dir() / "report.json"));
  EXPECT_EQ(report["mode"], "adaptation");
  EXPECT_EQ(report["strategy"], "rnd-all");
  ASSERT_EQ(report["seeds"].size(), 3u);
  double sum = 0;
  for (const auto& s : report["seeds"]) {
    sum += s["target_acc"].get<double>();
    EXPECT_TRUE(fs::exists(run_dir() / s["checkpoint"].get<std::string>()));
    EXPECT_EQ(s["epochs"].size(), 1u);
  }
  EXPECT_NEAR(report["mean"]["target_acc"].get<double>(), sum / 3, 1e-9);
  const std::string csv = slurp(run_dir() / "metrics.csv");
  EXPECT_EQ(count(csv, "\n"), 4u);
}

TEST_F(CliRun, EvalListsEachCorruptionOnce) {
  const std::string ckpt = (run_dir() / "checkpoint_seed0.txt").string();
  const Result r = run({"eval", "--checkpoint", ckpt, "--corrupt", "gaussian-noise:5", "--corrupt", "all:5",
                        "--corrupt", "gaussian-noise:5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count(r.out, "gaussian-noise,5,"), 1u) << r.out;
  EXPECT_EQ(count(r.out, "none,0,"), 1u);
  EXPECT_EQ(count(r.out, "\n"), 10u);  // header, clean, 8 corruptions

  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--corrupt", "fog:3"}).code, 1);
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--corrupt", "jpeg:9"}).code, 1);
}

TEST_F(CliRun, ResolvedConfigReproducesRun) {
  const fs::path again = root() / "again";
  const Result r = run({"train-da", "--config", (run_dir() / "config.resolved").string(), "--out", again.string(),
                        "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(again / "metrics.csv"), slurp(run_dir() / "metrics.csv"));
  EXPECT_EQ(slurp(again / "checkpoint_seed2.txt"), slurp(run_dir() / "checkpoint_seed2.txt"));
}

TEST_F(CliRun, PreviewWritesPairs) {
  const fs::path dir = root() / "preview";
  const Result r = run({"augment-preview", "--strategy", "rnd-color", "--n", "3", "--out", dir.string(), "--data",
                        config().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 3; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "pair_%03d_original.png", i);
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  EXPECT_TRUE(fs::exists(dir / "grid.png"));
  EXPECT_EQ(run({"augment-preview", "--strategy", "adv-stn", "--out", (root() / "p2").string()}).code, 1);
}
