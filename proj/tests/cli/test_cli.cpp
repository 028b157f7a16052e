#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../unit/support.hpp"
#include "cli.hpp"
#include "run_config.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap::cli {
namespace {

namespace fs = std::filesystem;
using vaxmap::testing::TempDir;

const fs::path kSource = VAXMAP_SOURCE_DIR;
const fs::path kExample = kSource / "configs" / "example.toml";
const fs::path kGolden = kSource / "tests" / "golden" / "example_digests.json";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result vaxmap(std::vector<std::string> args) {
  args.insert(args.begin(), "vaxmap");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

// Output digests as recorded in a stage's manifest.
nlohmann::json output_digests(const fs::path& dir) {
  nlohmann::json d = nlohmann::json::object();
  for (const auto& o : read_json(dir / "manifest.json")["outputs"]) d[o["path"].get<std::string>()] = o["sha256"];
  return d;
}

// The five example stages, each in its own directory under `root`.
nlohmann::json run_example_pipeline(const fs::path& root, const std::vector<std::string>& extra = {}) {
  const std::string c = kExample.string();
  const std::string sim = (root / "sim").string(), grid = (root / "sim" / "grid").string();
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  std::vector<std::pair<std::string, std::vector<std::string>>> stages{
      {"simulate", with({"simulate", "-c", c, "--out", sim})},
      {"fit", with({"fit", "-c", c, "--out", (root / "fit").string(), "--clusters", sim + "/clusters.csv", "--grid", grid})},
      {"predict",
       with({"predict", "-c", c, "--out", (root / "pred").string(), "--fit", (root / "fit" / "fit.vaxfit").string(),
             "--grid", grid})},
      {"aggregate", with({"aggregate", "-c", c, "--out", (root / "agg").string(), "--draws",
                          (root / "pred" / "cells.vaxdraws").string(), "--grid", grid})},
      {"classify", with({"classify", "-c", c, "--out", (root / "cls").string(), "--draws",
                         (root / "agg" / "state.vaxdraws").string(), "--grid", grid})},
  };
  nlohmann::json digests;
  for (const auto& [name, args] : stages) {
    const auto r = vaxmap(args);
    EXPECT_EQ(r.code, 0) << name << ": " << r.err;
    const fs::path dir = args[4];
    digests[name] = output_digests(dir);
  }
  return digests;
}

TEST(CliPipeline, ReproducesGoldenDigests) {
  TempDir dir;
  const auto digests = run_example_pipeline(dir.path());
  if (std::getenv("VAXMAP_UPDATE_GOLDEN") != nullptr) {
    write_text_file(kGolden, digests.dump(2) + "\n");
    GTEST_SKIP() << "golden digests rewritten";
  }
  ASSERT_TRUE(fs::exists(kGolden));
  const auto golden = read_json(kGolden);
  for (const auto& [stage, files] : golden.items()) {
    ASSERT_TRUE(digests.contains(stage)) << stage;
    EXPECT_EQ(digests[stage], files) << stage;
  }

  // Inputs are recorded with digests and left untouched by every stage.
  for (const char* stage : {"fit", "pred", "agg", "cls"})
    for (const auto& in : read_json(dir / stage / "manifest.json")["inputs"])
      EXPECT_EQ(sha256_file(in["path"].get<std::string>()), in["sha256"]) << in["path"];
}

TEST(CliPipeline, ManifestRecordsSeedConfigAndVersions) {
  TempDir dir;
  const auto r = vaxmap({"simulate", "-c", kExample.string(), "--out", dir.path().string(), "--set",
                         "simulate.design.urban_psus=3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_json(dir / "manifest.json");
  EXPECT_EQ(m["seed"], 20240517u);
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["config"]["simulate"]["design"]["urban_psus"], 3);
  EXPECT_FALSE(m["config"].contains("threads"));
  EXPECT_TRUE(m["versions"].contains("eigen"));
  EXPECT_EQ(m["inputs"][0]["sha256"], sha256_file(kExample));
  for (const auto& o : m["outputs"]) EXPECT_EQ(sha256_file(dir / o["path"].get<std::string>()), o["sha256"]);
}

TEST(CliFit, ByteIdenticalAcrossRunsAndThreads) {
  TempDir dir;
  const std::string c = kExample.string();
  ASSERT_EQ(vaxmap({"simulate", "-c", c, "--out", (dir / "sim").string()}).code, 0);
  auto fit_once = [&](const std::string& threads) {
    const auto r = vaxmap({"fit", "-c", c, "--out", (dir / "fit").string(), "--clusters",
                           (dir / "sim" / "clusters.csv").string(), "--grid", (dir / "sim" / "grid").string(),
                           "--iterations", "600", "--burn-in", "200", "--thin", "4", "--threads", threads});
    EXPECT_NE(r.code, 1) << r.err;
    return std::make_pair(read_text_file(dir / "fit" / "fit.vaxfit"), read_text_file(dir / "fit" / "manifest.json"));
  };
  const auto a = fit_once("1");
  const auto b = fit_once("1");
  const auto c4 = fit_once("4");
  EXPECT_TRUE(a.first == b.first);
  EXPECT_TRUE(a.first == c4.first);
  EXPECT_EQ(a.second, c4.second);
}

TEST(CliClassify, PrintsAtcpPerLevelAndSelectsK) {
  TempDir dir;
  run_example_pipeline(dir.path());
  const auto r = vaxmap({"classify", "-c", kExample.string(), "--out", (dir / "again").string(), "--draws",
                         (dir / "agg" / "state.vaxdraws").string(), "--atcp-min", "0.7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("K=4 ATCP="), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("K=3 ATCP="), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("selected K=3"), std::string::npos) << r.out;
  const auto t = read_csv(dir / "again" / "atcp.csv");
  for (const auto& row : t.rows)
    if (row[2] == "1") {
      EXPECT_EQ(row[0], "3");
      EXPECT_GE(parse_double(row[1], "atcp"), 0.7);
    }
}

TEST(CliConfig, PrecedenceCliOverConfigOverDefaults) {
  TempDir dir;
  vaxmap::testing::write_file(dir / "c.toml", "seed = 5\n[mcmc]\nchains = 3\nthin = 7\n");
  const auto defaults = load_run_config(std::nullopt, {});
  EXPECT_EQ(defaults.mcmc.chains, 4);
  EXPECT_FALSE(defaults.seed.has_value());
  const auto file = load_run_config(dir / "c.toml", {});
  EXPECT_EQ(file.mcmc.chains, 3);
  EXPECT_EQ(file.mcmc.thin, 7);
  EXPECT_EQ(file.mcmc.burn_in, 2000);
  const auto cli = load_run_config(dir / "c.toml", {{"mcmc.chains", "2"}, {"seed", "9"}});
  EXPECT_EQ(cli.mcmc.chains, 2);
  EXPECT_EQ(cli.mcmc.thin, 7);
  EXPECT_EQ(*cli.seed, 9u);
  const auto str = load_run_config(std::nullopt, {{"paths.clusters", "123", true}});
  EXPECT_EQ(str.clusters->string(), "123");
}

TEST(CliConfig, RejectsUnknownAndMistypedKeys) {
  EXPECT_VAXMAP_ERROR(load_run_config(std::nullopt, {{"mcmc.chainz", "2"}}), ErrorKind::Validation, "mcmc.chainz");
  EXPECT_VAXMAP_ERROR(load_run_config(std::nullopt, {{"mcmc.chains", "two"}}), ErrorKind::Validation, "integer");
  EXPECT_VAXMAP_ERROR(load_run_config(std::nullopt, {{"model.class", "Poisson"}}), ErrorKind::Validation, "Poisson");
}

TEST(CliErrors, ExitCodesAndErrorFile) {
  TempDir dir;
  const std::string out = (dir / "e").string();

  auto r = vaxmap({"simulate", "--out", out});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("seed is required"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  const auto e = read_json(dir / "e" / "error.json");
  EXPECT_EQ(e["kind"], "validation");
  EXPECT_EQ(e["exit_code"], kExitValidation);

  r = vaxmap({"fit", "--seed", "1", "--out", out, "--clusters", (dir / "missing.csv").string()});
  EXPECT_EQ(r.code, kExitValidation);

  const std::string c = kExample.string();
  ASSERT_EQ(vaxmap({"simulate", "-c", c, "--out", (dir / "sim").string()}).code, 0);
  const std::vector<std::string> fit{"fit", "-c", c, "--out", out, "--clusters", (dir / "sim" / "clusters.csv").string(),
                                     "--grid", (dir / "sim" / "grid").string()};
  auto resource = fit;
  resource.insert(resource.end(), {"--set", "model.max_nodes=10"});
  r = vaxmap(resource);
  EXPECT_EQ(r.code, kExitResource) << r.err;
  EXPECT_EQ(read_json(dir / "e" / "error.json")["kind"], "resource");

  auto short_run = fit;
  short_run.insert(short_run.end(), {"--iterations", "40", "--burn-in", "20", "--thin", "1"});
  r = vaxmap(short_run);
  EXPECT_EQ(r.code, kExitFailedConvergence) << r.err;
  EXPECT_TRUE(fs::exists(dir / "e" / "fit.vaxfit"));
  EXPECT_EQ(read_json(dir / "e" / "manifest.json")["status"], "failed_convergence");

  EXPECT_EQ(vaxmap({"frobnicate"}).code, kExitValidation);
  EXPECT_EQ(vaxmap({"fit", "--help"}).code, kExitOk);
}

TEST(CliBinary, SingleLineDiagnosticAndExitCode) {
  TempDir dir;
  const std::string cmd = std::string(VAXMAP_BINARY) + " exceed --seed 1 --out " + (dir / "o").string() +
                          " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kExitValidation);
  const std::string err = read_text_file(dir / "err.txt");
  EXPECT_EQ(err.rfind("vaxmap exceed: validation error: ", 0), 0u) << err;
}

}  // namespace
}  // namespace vaxmap::cli
