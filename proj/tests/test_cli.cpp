#include "doctest_torch.hpp"

#include <cstdlib>
#include <fstream>

#include "cli_pipeline.hpp"
#include "glyphfusion/cli.hpp"
#include "glyphfusion/config.hpp"
#include "glyphfusion/diffusion.hpp"
#include "glyphfusion/error.hpp"
#include "glyphfusion/png_io.hpp"
#include "support.hpp"

using namespace glyphfusion;
using namespace gf_test;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "glyphfusion");
  return run_cli(args);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults cover the documented keys") {
  ExperimentConfig cfg;
  CHECK(cfg.get_int("T") == 200);
  CHECK(cfg.get_int("canvas_side") == 32);
  CHECK(cfg.get_double("augment_prob") == 0.3);
  CHECK(cfg.get_double("augment_max_frac") == 0.2);
  CHECK(cfg.get_double("w") == 3.0);
  CHECK(cfg.get_double("p_drop") == 0.1);
  CHECK(cfg.get_double("lr") == 1e-4);
  CHECK(cfg.get_int("style_dim") == 512);
  CHECK(cfg.get_list("split_ratios") == std::vector<double>{0.8, 0.1, 0.1});
  CHECK(cfg.source("T") == "default");
  for (const auto& k : config_keys()) CHECK(cfg.has_key(k.name));
}

TEST_CASE("file < environment < command line") {
  TempDir dir("cfg");
  {
    std::ofstream os(dir / "a.cfg");
    os << "# comment\nT = 50\nw = 2.5  # trailing\n\nseed=4\n";
  }
  ExperimentConfig cfg;
  cfg.load_file(dir / "a.cfg");
  CHECK(cfg.get_int("T") == 50);
  CHECK(cfg.get_double("w") == 2.5);
  CHECK(cfg.source("T") == (dir / "a.cfg").string());

  ::setenv("GLYPHFUSION_SEED", "11", 1);
  ::setenv("GLYPHFUSION_T", "60", 1);
  cfg.load_env();
  ::unsetenv("GLYPHFUSION_SEED");
  ::unsetenv("GLYPHFUSION_T");
  CHECK(cfg.seed() == 11);
  CHECK(cfg.get_int("T") == 60);
  CHECK(cfg.source("seed") == "env");

  cfg.set_assignment("T=70");
  CHECK(cfg.get_int("T") == 70);
  CHECK(cfg.source("T") == "cli");
  CHECK(cfg.get_double("w") == 2.5);
}

TEST_CASE("unknown keys and malformed values are rejected") {
  TempDir dir("cfgbad");
  {
    std::ofstream os(dir / "bad.cfg");
    os << "T = 10\nlearning_rate = 0.1\n";
  }
  ExperimentConfig cfg;
  auto kind = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  CHECK(kind([&] { cfg.load_file(dir / "bad.cfg"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { cfg.set("bogus", "1"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { cfg.set("T", "ten"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { cfg.set_assignment("novalue"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { cfg.load_file(dir / "missing.cfg"); }) != ErrorKind::kInvalidArgument);
}

TEST_CASE("derived training configs follow the keys") {
  ExperimentConfig cfg;
  cfg.set("T", "30");
  cfg.set("base_channels", "16");
  cfg.set("channel_mult", "1,2");
  cfg.set("seed", "9");
  auto d = cfg.diffusion();
  CHECK(d.T == 30);
  CHECK(d.base_channels == 16);
  CHECK(d.channel_mult == std::vector<int>{1, 2});
  auto dt = cfg.diffusion_train();
  CHECK(dt.seed == derive_seed(9, "diffusion"));
  CHECK(dt.augment.prob == 0.3);
  CHECK(cfg.fannet_train().seed == derive_seed(9, "fannet"));
  CHECK(cfg.manifest_dir() == cfg.output_dir() / "data");
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("error paths exit nonzero") {
  TempDir dir("clierr");
  CHECK(cli({"no-such-command"}) != 0);
  CHECK(cli({"prepare-data", "--output-dir", (dir / "o").string(), "--data-root", (dir / "absent").string()}) == 2);
  auto recs = read_run_records(dir / "o");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0]["status"] == "error");
  CHECK_FALSE(fs::exists(dir / "o/.glyphfusion.lock"));

  CHECK(cli({"train-diffusion", "--output-dir", (dir / "p").string()}) == 2);
  CHECK(read_run_records(dir / "p").at(0)["error"].get<std::string>().find("missing-prerequisite") !=
        std::string::npos);

  CHECK(cli({"sample", "--output-dir", (dir / "q").string(), "--set", "nonsense=1", "--letter", "A", "--out",
             (dir / "q/x.png").string()}) == 2);
  CHECK(cli({"train-fannet", "--config", (dir / "missing.cfg").string(), "--output-dir", (dir / "r").string()}) != 0);
}

TEST_CASE("a held lock refuses a second invocation") {
  TempDir dir("clilock");
  DirectoryLock lock(dir.path());
  CHECK_THROWS_AS(DirectoryLock(dir.path()), Error);
  CHECK(cli({"prepare-data", "--output-dir", dir.path().string(), "--data-root", dir.path().string()}) == 2);
}

TEST_CASE("tiny end-to-end pipeline through the command line") {
  TempDir dir("pipeline");
  const auto cfg = write_tiny_experiment(dir.path());
  const auto out = dir / "run";
  auto run = run_tiny_pipeline(cfg, out);
  for (const auto& [label, code] : run.exits) {
    CAPTURE(label);
    CHECK(code == 0);
  }
  REQUIRE(run.records.size() == run.exits.size());
  for (const auto& r : run.records) CHECK(r["status"] == "ok");

  CHECK(fs::exists(out / "data/train.jsonl"));
  CHECK(fs::exists(out / "data/val.jsonl"));
  CHECK(fs::exists(out / "data/test.jsonl"));
  CHECK(fs::exists(out / "fannet.ckpt"));
  CHECK(fs::exists(out / "diffusion.ckpt"));
  CHECK(fs::exists(out / "classifier.ckpt"));
  CHECK(fs::exists(out / "diffusion_loss.csv"));
  CHECK(DiffusionModel::load(out / "diffusion.ckpt").step() == 8);

  int pngs = 0;
  for (const auto& e : fs::directory_iterator(out / "sweep")) pngs += e.path().extension() == ".png" ? 1 : 0;
  CHECK(pngs == 4);
  CHECK(fs::exists(out / "sweep/mosaic.png"));
  CHECK(fs::exists(out / "sweep/sweep.json"));
  CHECK(fs::exists(out / "interp_image.png.json"));

  auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report["mse"]["paired"] == 0.0);
  CHECK(report["precision"] == 1.0);
  CHECK(report["recall"] == 1.0);

  const auto manifest = slurp(out / "data/train.jsonl");
  CHECK(cli({"prepare-data", "--config", cfg.string(), "--output-dir", out.string(), "--data-root",
             (out / "corpus").string()}) == 0);
  CHECK(slurp(out / "data/train.jsonl") == manifest);

  // The seed override from the environment reaches the run record.
  ::setenv("GLYPHFUSION_SEED", "77", 1);
  CHECK(cli({"sample", "--config", cfg.string(), "--output-dir", out.string(), "--letter", "D", "--out",
             (out / "env.png").string()}) == 0);
  ::unsetenv("GLYPHFUSION_SEED");
  auto last = read_run_records(out).back();
  CHECK(last["config"]["seed"] == 77);
  CHECK(last["config_sources"]["seed"] == "env");
}

}  // TEST_SUITE
