#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "badcm/pipeline.hpp"
#include "support.hpp"

using namespace badcm;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string(BADCM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

nlohmann::json small_config(const fs::path& manifest, const std::string& scenario) {
  return {{"dataset", {{"manifest", manifest.string()}, {"image_size", 16}, {"split", {0.6, 0.2, 0.2}}}},
          {"scenario", scenario},
          {"targets", {0}},
          {"ratio", 0.05},
          {"seed", 1},
          {"trigger", {{"epochs", 1}, {"batch_size", 16}, {"train_images", 16}, {"generator_channels", 2},
                       {"discriminator_channels", 2}}},
          {"victim", {{"epochs", 2}, {"batch_size", 32}}},
          {"metrics", {{"k", 20}}},
          {"surrogate", {{"backend", "toy"}}}};
}

fs::path write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream(path) << j.dump(2);
  return path;
}

}  // namespace

TEST_CASE("cli stages run in order and report missing artifacts") {
  badcm::testing::TempDir dir("cli");
  auto r = run_cli("make-toy-dataset -o " + (dir / "data").string() + " --count 60 --size 16", dir.path());
  REQUIRE(r.code == 0);
  const auto manifest = dir / "data" / "manifest.jsonl";
  REQUIRE(fs::exists(manifest));

  for (const std::string scenario : {"L2V", "V2L"}) {
    CAPTURE(scenario);
    const auto cfg = write_json(dir / (scenario + ".json"), small_config(manifest, scenario));
    const auto run = dir / ("run-" + scenario);
    const std::string common = "-c " + cfg.string() + " -r " + run.string();

    r = run_cli("evaluate " + common, dir.path());
    CHECK(r.code == 2);
    CHECK(r.output.find("train-victim") != std::string::npos);

    REQUIRE(run_cli("mine " + common, dir.path()).code == 0);
    CHECK(fs::exists(run / "mine" / "train_mining.jsonl"));
    REQUIRE(run_cli("train-trigger " + common, dir.path()).code == 0);
    CHECK(fs::exists(run / "train-trigger" / (scenario == "L2V" ? "skipped.json" : "generator.ckpt")));
    REQUIRE(run_cli("poison " + common, dir.path()).code == 0);
    CHECK(fs::exists(run / "targets" / "0" / "poison" / "provenance.jsonl"));

    r = run_cli("evaluate " + common, dir.path());
    CHECK(r.code == 2);
    CHECK(r.output.find("train-victim") != std::string::npos);

    REQUIRE(run_cli("train-victim " + common, dir.path()).code == 0);
    r = run_cli("evaluate " + common, dir.path());
    CHECK(r.code == 0);
    CHECK(r.output.find("ASR") != std::string::npos);
    CHECK(fs::exists(run / "report.txt"));
    CHECK(fs::exists(run / "targets" / "0" / "evaluate" / "report.txt"));

    r = run_cli("evaluate " + common + " -t 3", dir.path());
    CHECK(r.code == 2);
    CHECK(r.output.find("--target") != std::string::npos);
  }
}

TEST_CASE("cli configuration errors") {
  badcm::testing::TempDir dir("cli-cfg");
  REQUIRE(run_cli("make-toy-dataset -o " + (dir / "data").string() + " --count 40 --size 16", dir.path()).code == 0);
  const auto manifest = dir / "data" / "manifest.jsonl";
  const auto run = (dir / "run").string();

  auto expect_invalid = [&](nlohmann::json j, const std::string& field) {
    CAPTURE(field);
    const auto cfg = write_json(dir / "bad.json", j);
    const auto r = run_cli("mine -c " + cfg.string() + " -r " + run, dir.path());
    CHECK(r.code == 2);
    CHECK(r.output.find(field) != std::string::npos);
  };
  auto base = small_config(manifest, "V2L");
  auto j = base;
  j["ratio"] = 1.5;
  expect_invalid(j, "ratio");
  j = base;
  j["scenario"] = "X2Y";
  expect_invalid(j, "scenario");
  j = base;
  j["dataset"]["image_size"] = 30;
  expect_invalid(j, "image_size");
  j = small_config(manifest, "L2V");
  j["text_poison"] = {{"s_target", 0.0}};
  expect_invalid(j, "s_target");
  j = base;
  j["trigger"]["batch_size"] = 0;
  expect_invalid(j, "batch_size");

  {
    std::ofstream(dir / "broken.json") << "{ not json";
  }
  auto r = run_cli("mine -c " + (dir / "broken.json").string() + " -r " + run, dir.path());
  CHECK(r.code == 2);

  r = run_cli("mine -c " + (dir / "missing.json").string() + " -r " + run, dir.path());
  CHECK(r.code == 2);

  j = base;
  j["dataset"]["manifest"] = (dir / "nowhere.jsonl").string();
  r = run_cli("mine -c " + write_json(dir / "io.json", j).string() + " -r " + run, dir.path());
  CHECK(r.code == 1);

  r = run_cli("no-such-command", dir.path());
  CHECK(r.code == 2);
}

TEST_CASE("run configuration round trip") {
  badcm::testing::TempDir dir("runcfg");
  auto j = small_config("data/manifest.jsonl", "DualKey");
  const auto c = RunConfig::from_json(j, dir.path());
  CHECK(c.dataset == dir.path() / "data/manifest.jsonl");
  CHECK(c.scenario == AttackScenario::DualKey);
  CHECK(c.image_size == 16);
  CHECK(c.k == 20);
  CHECK(c.trigger.epochs == 1);
  const auto again = RunConfig::from_json(c.to_json(), dir.path());
  CHECK(again.to_json() == c.to_json());
}
