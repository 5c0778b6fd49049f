// End-to-end checks of the installed CLI binary (path injected by CMake).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "puzzlegan/image_io.hpp"
#include "puzzlegan/permset.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& stdout_to = {}) {
  std::string cmd = std::string(PUZZLEGAN_CLI_PATH) + " " + args;
  if (!stdout_to.empty()) cmd += " > " + stdout_to.string() + " 2>&1";
  else cmd += " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Small synthetic run shared by the sample/eval cases.
fs::path train_tiny(const TempDir& dir) {
  const fs::path cfg = dir.path / "cfg.json";
  std::ofstream(cfg) << R"({
    "loss": "rals", "iterations": 50, "batch_size": 4, "seed": 1,
    "image_size": 12, "z_dim": 8, "base_width_g": 4, "base_width_d": 4,
    "dataset": {"source": "synthetic", "n": 32, "seed": 7},
    "eval": {"n_samples": 64, "seed": 5, "extractor": {"kind": "toy", "seed": 7, "dim": 8}}
  })";
  REQUIRE(run("train --config " + cfg.string() + " --out-root " + (dir.path / "runs").string()) == 0);
  for (const auto& e : fs::directory_iterator(dir.path / "runs"))
    if (fs::exists(e.path() / "ckpt-final.bin")) return e.path();
  FAIL("no run directory produced");
  return {};
}

}  // namespace

TEST_CASE("perms subcommand writes a loadable set") {
  TempDir dir("pzg_cli_perms");
  const fs::path out = dir.path / "perms.txt";
  REQUIRE(run("perms --tiles 9 --k 30 --seed 1 --out " + out.string()) == 0);
  const auto set = puzzlegan::permset::load_set(out);
  CHECK(set.k() == 30);
  CHECK(set.tile_count == 9);
}

TEST_CASE("train produces a complete, reproducible run directory") {
  TempDir dir("pzg_cli_train");
  const fs::path run_dir = train_tiny(dir);
  CHECK(fs::exists(run_dir / "config.json"));
  CHECK(fs::exists(run_dir / "metrics.jsonl"));

  std::ifstream metrics(run_dir / "metrics.jsonl");
  int lines = 0;
  std::string line;
  nlohmann::json last;
  while (std::getline(metrics, line)) {
    ++lines;
    last = nlohmann::json::parse(line);
  }
  CHECK(lines == 50);
  for (const char* key : {"iteration", "d_adv", "g_adv", "v_disc", "v_gen", "d_total",
                          "g_total", "acc_real", "acc_fake"})
    CHECK(last.contains(key));

  const auto echo = nlohmann::json::parse(slurp(run_dir / "config.json"));
  CHECK(echo["loss"] == "rals");
  CHECK(echo["seed"] == 1);
  CHECK(echo.contains("version"));
  CHECK(echo.contains("dataset_fingerprint"));
}

TEST_CASE("alpha=beta=0 still logs v terms but excludes them from totals") {
  TempDir dir("pzg_cli_ablate");
  const fs::path cfg = dir.path / "cfg.json";
  std::ofstream(cfg) << R"({
    "loss": "ras", "iterations": 4, "batch_size": 4, "seed": 1,
    "image_size": 12, "z_dim": 8, "base_width_g": 4, "base_width_d": 4,
    "dataset": {"source": "synthetic", "n": 16, "seed": 2}
  })";
  REQUIRE(run("train --config " + cfg.string() + " --alpha 0 --beta 0 --out-root " +
              (dir.path / "runs").string()) == 0);
  fs::path run_dir;
  for (const auto& e : fs::directory_iterator(dir.path / "runs")) run_dir = e.path();
  std::ifstream metrics(run_dir / "metrics.jsonl");
  std::string line;
  while (std::getline(metrics, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(double(j["v_disc"]) > 0.0);  // measured
    CHECK(double(j["d_total"]) == double(j["d_adv"]));  // excluded from totals
    CHECK(double(j["g_total"]) == double(j["g_adv"]));
  }
}

TEST_CASE("a missing dataset path fails without creating a run directory") {
  TempDir dir("pzg_cli_missing");
  const int rc = run("train --data " + (dir.path / "nope").string() + " --iterations 2" +
                     " --image-size 12 --out-root " + (dir.path / "runs").string());
  CHECK(rc == 1);
  CHECK_FALSE(fs::exists(dir.path / "runs"));
}

TEST_CASE("unknown config keys are rejected") {
  TempDir dir("pzg_cli_badcfg");
  const fs::path cfg = dir.path / "cfg.json";
  std::ofstream(cfg) << R"({"loss": "rals", "warmup_iters": 5})";
  CHECK(run("train --config " + cfg.string()) == 1);
}

TEST_CASE("sample writes byte-identical grids for identical calls") {
  TempDir dir("pzg_cli_sample");
  const fs::path run_dir = train_tiny(dir);
  const fs::path ckpt = run_dir / "ckpt-final.bin";

  const fs::path g1 = dir.path / "g1.png", g2 = dir.path / "g2.png";
  REQUIRE(run("sample --checkpoint " + ckpt.string() + " --n 64 --seed 11 --out " + g1.string()) == 0);
  REQUIRE(run("sample --checkpoint " + ckpt.string() + " --n 64 --seed 11 --out " + g2.string()) == 0);
  CHECK(slurp(g1) == slurp(g2));

  const auto img = puzzlegan::image_io::decode_image(g1);
  CHECK(img.width == 8 * 12);  // 64 samples in an 8x8 grid
  CHECK(img.height == 8 * 12);

  REQUIRE(run("sample --checkpoint " + ckpt.string() +
              " --n 5 --seed 3 --generator best-g --out " + (dir.path / "g3.png").string()) == 0);
  CHECK(run("sample --checkpoint " + (dir.path / "missing.bin").string() + " --out " +
            (dir.path / "g4.png").string()) == 1);
}

TEST_CASE("eval reports a finite positive score, identically across calls") {
  TempDir dir("pzg_cli_eval");
  const fs::path run_dir = train_tiny(dir);
  const fs::path ckpt = run_dir / "ckpt-final.bin";
  const std::string args = "eval --checkpoint " + ckpt.string() +
                           " --image-size 12 --n-samples 64 --seed 5 --extractor toy" +
                           " --extractor-seed 7 --extractor-dim 8";

  const fs::path o1 = dir.path / "eval1.json", o2 = dir.path / "eval2.json";
  REQUIRE(run(args, o1) == 0);
  REQUIRE(run(args, o2) == 0);
  CHECK(slurp(o1) == slurp(o2));

  // The stdout line is the structured report.
  std::istringstream is(slurp(o1));
  std::string line;
  std::getline(is, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(double(j["fid"]) > 0.0);
  CHECK(j["n_samples"] == 64);
  CHECK(j["seed"] == 5);
  CHECK(std::string(j["extractor_id"]).find("toy") == 0);
  CHECK(std::string(j["checkpoint_id"]).find("ckpt-final.bin") == 0);

  // best-g selection works against the same checkpoint.
  REQUIRE(run(args + " --generator best-g", dir.path / "eval3.json") == 0);
}

TEST_CASE("usage errors exit with status 1") {
  CHECK(run("train --deshuffle sometimes") == 1);
  CHECK(run("bogus-subcommand") == 1);
  CHECK(run("sample") == 1);  // missing required --checkpoint
}
