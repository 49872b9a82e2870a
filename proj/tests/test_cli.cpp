#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qwave/commands.hpp"

using namespace qwave;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("qwave_cli_" + name);
  fs::remove_all(p);
  return p;
}

cmd::Context context(const std::string& name, std::initializer_list<std::string> sets) {
  cmd::Context ctx;
  ctx.out_dir = scratch(name);
  ctx.quiet = true;
  for (const auto& kv : sets) ctx.config.set_assignment(kv);
  return ctx;
}

io::Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return io::Json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesCommentsAndWhitespace) {
  ExperimentConfig c;
  std::istringstream in("# header\n  simulate.epsilon = 0.25   # inline\n\nscaling.epsilons=0.4, 0.2\n");
  c.parse(in);
  EXPECT_EQ(c.num("simulate.epsilon"), 0.25);
  EXPECT_EQ(c.list("scaling.epsilons"), (std::vector<double>{0.4, 0.2}));
}

TEST(Config, UnknownKeyIsRejected) {
  ExperimentConfig c;
  std::istringstream in("simulate.epsilonn = 0.1\n");
  try {
    c.parse(in, "run.cfg");
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::rejected);
    EXPECT_NE(std::string(e.what()).find("run.cfg:1"), std::string::npos);
  }
}

TEST(Config, MalformedValuesAreRejected) {
  ExperimentConfig c;
  std::istringstream no_eq("simulate.epsilon 0.1\n");
  EXPECT_THROW(c.parse(no_eq), Error);
  c.set("simulate.epsilon", "abc");
  EXPECT_THROW((void)c.num("simulate.epsilon"), Error);
  c.set("geometry.y_samples", "12.5");
  EXPECT_THROW((void)c.count("geometry.y_samples"), Error);
  c.set("simulate.snapshot", "maybe");
  EXPECT_THROW((void)c.flag("simulate.snapshot"), Error);
  c.set("scaling.epsilons", "0.4,,0.1");
  EXPECT_THROW((void)c.list("scaling.epsilons"), Error);
  EXPECT_THROW(c.set_assignment("novalue"), Error);
}

TEST(Config, HashTracksEveryValue) {
  ExperimentConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.set("detection.cfl", "0.9");
  EXPECT_NE(a.hash(), b.hash());
  b.set("detection.cfl", "0.9999");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), hex64(fnv1a64(a.canonical())));
}

TEST(Config, CanonicalTextIsSortedAndComplete) {
  ExperimentConfig c;
  const auto text = c.canonical();
  std::istringstream in(text);
  std::string line, prev;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_LT(prev, line);
    prev = line;
    ++n;
  }
  EXPECT_EQ(n, c.entries().size());
  // the canonical text parses back to the same config
  ExperimentConfig d;
  std::istringstream again(text);
  d.parse(again);
  EXPECT_EQ(d.hash(), c.hash());
}

TEST(Cli, ZeroPresetGivesEmptyProfile) {
  auto ctx = context("profile_zero", {"data.preset=zero"});
  ASSERT_EQ(cmd::run("profile", ctx), cmd::kSuccess);
  const auto j = read_json(ctx.out_dir / "profile.json");
  EXPECT_TRUE(j["empty"].get<bool>());
  EXPECT_EQ(j["meta"]["config_hash"], ctx.config.hash());
  EXPECT_EQ(j["meta"]["version"], kVersion);
  EXPECT_EQ(j["meta"]["config"]["data.preset"], "zero");
}

TEST(Cli, GaussianProfileValueAtSigmaZero) {
  auto ctx = context("profile_gaussian", {"profile.sigma_min=-10"});
  ASSERT_EQ(cmd::run("profile", ctx), cmd::kSuccess);
  const double ref = std::sqrt(kPi) * std::tgamma(0.25) / (2.0 * std::pow(2.0, 1.5) * kPi);
  const auto j = read_json(ctx.out_dir / "profile.json");
  const auto& sig = j["profile"]["sigma_grid"];
  std::size_t i0 = 0;
  while (std::abs(sig[i0].get<double>()) > 1e-12) ++i0;
  for (const auto& v : j["profile"]["F0"][i0]) EXPECT_NEAR(v.get<double>(), ref, 1e-4);
  EXPECT_EQ(j["decay_note"], "skipped: profile.sigma_min must be <= -50");
}

TEST(Cli, UnknownSubcommandIsAConfigError) {
  EXPECT_EQ(cmd::run("plot", context("bad_sub", {})), cmd::kConfigOrDiagnostic);
}

TEST(Cli, ModulatedPredictionMatchesClosedForm) {
  auto ctx = context("predict_mod", {"data.preset=modulated", "profile.sigma_min=-6"});
  ASSERT_EQ(cmd::run("predict", ctx), cmd::kSuccess);
  const auto j = read_json(ctx.out_dir / "prediction.json");
  const double tau0 = 1.0 / (1.2 * std::sqrt(2.0) * std::exp(-0.5));
  EXPECT_NEAR(j["prediction"]["tau0"].get<double>(), tau0, 1e-5);
  EXPECT_FALSE(j["prediction"]["degenerate"].get<bool>());
  EXPECT_NEAR(j["blowup_point"]["T"].get<double>(), (tau0 / 0.1) * (tau0 / 0.1), 1e-3);
}

TEST(Cli, PredictSentinelsForZeroAndDegenerate) {
  auto zero = context("predict_zero", {"data.preset=zero", "profile.sigma_min=-6"});
  ASSERT_EQ(cmd::run("predict", zero), cmd::kSuccess);
  const auto jz = read_json(zero.out_dir / "prediction.json");
  EXPECT_TRUE(jz["prediction"]["no_blowup"].get<bool>());
  EXPECT_TRUE(jz["prediction"]["tau0"].is_null());

  auto deg = context("predict_deg", {"data.preset=synthetic_gaussian", "profile.sigma_min=-6"});
  ASSERT_EQ(cmd::run("predict", deg), cmd::kSuccess);
  EXPECT_TRUE(read_json(deg.out_dir / "prediction.json")["prediction"]["degenerate"].get<bool>());
}

TEST(Cli, LinearSimulationReportsNoBlowup) {
  auto ctx = context("sim_linear", {"data.preset=linear", "simulate.h=0.02", "simulate.horizon=10"});
  EXPECT_EQ(cmd::run("simulate", ctx), cmd::kNoBlowup);
  const auto j = read_json(ctx.out_dir / "report.json");
  EXPECT_FALSE(j["report"]["detected"].get<bool>());
  EXPECT_TRUE(fs::exists(ctx.out_dir / "history.csv"));
  EXPECT_TRUE(fs::exists(ctx.out_dir / "timing.json"));
}

TEST(Cli, UndersizedGridIsRejectedWithRequiredExtent) {
  auto ctx = context("sim_small", {"simulate.geometry=cartesian", "simulate.extent=5", "simulate.epsilon=0.4",
                                   "profile.sigma_min=-6"});
  std::ostringstream log;
  ctx.log = &log;
  EXPECT_EQ(cmd::run("simulate", ctx), cmd::kConfigOrDiagnostic);
  EXPECT_NE(log.str().find("need at least"), std::string::npos);
}

TEST(Cli, SyntheticPresetCannotBeSimulated) {
  EXPECT_EQ(cmd::run("simulate", context("sim_synth", {"data.preset=modulated"})), cmd::kConfigOrDiagnostic);
}

TEST(Cli, SnapshotDumpCoversTheGrid) {
  auto ctx = context("sim_snap", {"data.preset=linear", "simulate.h=0.05", "simulate.horizon=1", "simulate.snapshot=true"});
  EXPECT_EQ(cmd::run("simulate", ctx), cmd::kNoBlowup);
  std::ifstream in(ctx.out_dir / "snapshot.csv");
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first.rfind("# qwave ", 0), 0u);
  EXPECT_EQ(header, "r,theta,u,ut");
}

TEST(Cli, ScalingOutputsAreBitIdenticalAcrossRuns) {
  auto a = context("scal_a", {"scaling.epsilons=0.8,0.4", "scaling.h=0.01", "profile.sigma_min=-6"});
  auto b = context("scal_b", {"scaling.epsilons=0.8,0.4", "scaling.h=0.01", "profile.sigma_min=-6"});
  ASSERT_EQ(cmd::run("scaling", a), cmd::kSuccess);
  ASSERT_EQ(cmd::run("scaling", b), cmd::kSuccess);
  for (const char* f : {"scaling.json", "scaling.csv"}) {
    EXPECT_EQ(slurp(a.out_dir / f), slurp(b.out_dir / f)) << f;
  }
  const auto j = read_json(a.out_dir / "scaling.json");
  EXPECT_EQ(j["study"]["rows"].size(), 2u);
  EXPECT_TRUE(j["study"]["rows"][0]["detected"].get<bool>());
}

TEST(Cli, GeometryFlagsDegenerateProfile) {
  auto ctx = context("geo_deg", {"data.preset=synthetic_gaussian", "geometry.tau1=0.3"});
  EXPECT_EQ(cmd::run("geometry", ctx), cmd::kConfigOrDiagnostic);
  const auto j = read_json(ctx.out_dir / "geometry.json");
  EXPECT_FALSE(j["H"]["checkable"].get<bool>());
}
