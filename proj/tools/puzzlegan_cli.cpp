// Command-line front end: train | sample | eval | perms.
//
// Exit codes: 0 success, 1 user error (bad flags/config/paths), 2 internal
// error. PUZZLEGAN_OUT_ROOT sets the default run-directory root.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "puzzlegan/dataio.hpp"
#include "puzzlegan/evalfid.hpp"
#include "puzzlegan/image_io.hpp"
#include "puzzlegan/permset.hpp"
#include "puzzlegan/trainer.hpp"
#include "puzzlegan/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace puzzlegan;

namespace {

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw UserError("config: unknown key '" + where + it.key() + "'");
  }
}

struct ExtractorSpec {
  std::string kind = "toy";
  uint64_t seed = 7;
  int64_t dim = 32;
  int pool = 12;
  std::string command;
};

std::unique_ptr<evalfid::FeatureExtractor> make_extractor(const ExtractorSpec& e) {
  if (e.kind == "toy") return std::make_unique<evalfid::ToyExtractor>(e.seed, e.dim, e.pool);
  if (e.kind == "cmd") {
    if (e.command.empty()) throw UserError("extractor kind 'cmd' needs a command");
    return std::make_unique<evalfid::SubprocessExtractor>(e.command, e.dim);
  }
  throw UserError("unknown extractor kind '" + e.kind + "' (toy|cmd)");
}

// Everything a run needs, assembled from defaults < config file < flags.
struct RunSettings {
  trainer::TrainConfig train;
  dataio::DatasetSpec dataset;
  ExtractorSpec extractor;
  int64_t eval_n_samples = 2000;
  uint64_t eval_seed = 1;
  std::string out_root;
};

void apply_config_file(RunSettings& s, const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw UserError("config parse error in " + path.string() + ": " + e.what());
  }
  reject_unknown_keys(
      j,
      {"loss", "alpha", "beta", "batch_size", "iterations", "seed", "deshuffle", "z_dim",
       "image_size", "k_perm", "tile_count", "base_width_g", "base_width_d", "lr_g", "lr_d",
       "adam_beta1", "adam_beta2", "checkpoint_every", "sample_every", "log_every", "dataset",
       "eval", "out_root"},
      "");
  auto& t = s.train;
  if (j.contains("loss")) t.loss_variant = losses::variant_from_name(j["loss"]);
  if (j.contains("alpha")) t.alpha = j["alpha"];
  if (j.contains("beta")) t.beta = j["beta"];
  if (j.contains("batch_size")) t.batch_size = j["batch_size"];
  if (j.contains("iterations")) t.total_iterations = j["iterations"];
  if (j.contains("seed")) t.seed = j["seed"];
  if (j.contains("deshuffle")) t.deshuffle_enabled = j["deshuffle"];
  if (j.contains("z_dim")) t.z_dim = j["z_dim"];
  if (j.contains("image_size")) t.image_size = j["image_size"];
  if (j.contains("k_perm")) t.k_perm = j["k_perm"];
  if (j.contains("tile_count")) t.tile_count = j["tile_count"];
  if (j.contains("base_width_g")) t.base_width_g = j["base_width_g"];
  if (j.contains("base_width_d")) t.base_width_d = j["base_width_d"];
  if (j.contains("lr_g")) t.adam.lr_g = j["lr_g"];
  if (j.contains("lr_d")) t.adam.lr_d = j["lr_d"];
  if (j.contains("adam_beta1")) t.adam.beta1 = j["adam_beta1"];
  if (j.contains("adam_beta2")) t.adam.beta2 = j["adam_beta2"];
  if (j.contains("checkpoint_every")) t.checkpoint_every = j["checkpoint_every"];
  if (j.contains("sample_every")) t.sample_every = j["sample_every"];
  if (j.contains("log_every")) t.log_every = j["log_every"];
  if (j.contains("out_root")) s.out_root = j["out_root"];
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    reject_unknown_keys(d, {"source", "root", "n", "structure", "seed", "shuffle_seed"},
                        "dataset.");
    if (d.contains("source")) {
      const std::string src = d["source"];
      if (src == "synthetic")
        s.dataset.source = dataio::Source::SyntheticStructured;
      else if (src == "image_folder")
        s.dataset.source = dataio::Source::ImageFolder;
      else
        throw UserError("config: dataset.source must be synthetic|image_folder");
    }
    if (d.contains("root")) s.dataset.root = d["root"];
    if (d.contains("n")) s.dataset.synthetic.n_samples = d["n"];
    if (d.contains("structure")) s.dataset.synthetic.structure = d["structure"];
    if (d.contains("seed")) s.dataset.synthetic.seed = d["seed"];
    if (d.contains("shuffle_seed")) s.dataset.shuffle_seed = d["shuffle_seed"];
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    reject_unknown_keys(e, {"n_samples", "seed", "extractor"}, "eval.");
    if (e.contains("n_samples")) s.eval_n_samples = e["n_samples"];
    if (e.contains("seed")) s.eval_seed = e["seed"];
    if (e.contains("extractor")) {
      const json& x = e["extractor"];
      reject_unknown_keys(x, {"kind", "seed", "dim", "pool", "command"}, "eval.extractor.");
      if (x.contains("kind")) s.extractor.kind = x["kind"];
      if (x.contains("seed")) s.extractor.seed = x["seed"];
      if (x.contains("dim")) s.extractor.dim = x["dim"];
      if (x.contains("pool")) s.extractor.pool = x["pool"];
      if (x.contains("command")) s.extractor.command = x["command"];
    }
  }
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
  return buf;
}

fs::path resolve_out_root(const std::string& flag_value, const RunSettings& s) {
  if (!flag_value.empty()) return flag_value;
  if (!s.out_root.empty()) return s.out_root;
  if (const char* env = std::getenv("PUZZLEGAN_OUT_ROOT"); env && *env) return env;
  return "runs";
}

int cmd_train(RunSettings s, const std::string& out_root_flag) {
  s.dataset.image_size = s.train.image_size;
  trainer::validate_config(s.train);
  // Open the dataset before touching the filesystem so a bad path leaves no
  // partial run directory behind.
  auto data = dataio::open_dataset(s.dataset);

  const fs::path root = resolve_out_root(out_root_flag, s);
  const std::string name = timestamp() + "-" + losses::variant_name(s.train.loss_variant) +
                           "-deshuffle-" + (s.train.deshuffle_enabled ? "on" : "off");
  trainer::ArtifactSink sink;
  sink.run_dir = root / name;
  sink.on_report = [&](const trainer::StepReport& r) {
    if (r.iteration % std::max<int64_t>(s.train.log_every, 1) == 0)
      std::cout << trainer::metrics_json_line(r) << "\n";
  };

  std::cout << "run directory: " << sink.run_dir.string() << "\n";
  const trainer::TrainState final_state = trainer::train(s.train, *data, sink);
  std::cout << "done: " << final_state.iteration << " iterations, best g_total "
            << final_state.best_g_loss << " at iteration " << final_state.best_g_iteration
            << "\n";
  return 0;
}

int cmd_perms(int tiles, int64_t k, uint64_t seed, const fs::path& out) {
  const permset::PermutationSet set = permset::generate_set(tiles, k, seed);
  permset::save_set(set, out);
  std::cout << "wrote " << out.string() << " (tiles=" << set.tile_count << " k=" << set.k()
            << " min pairwise hamming=" << set.min_pairwise_hamming << ")\n";
  return 0;
}

int cmd_sample(const fs::path& ckpt, int64_t n, uint64_t seed, const fs::path& out,
               const std::string& which) {
  if (n < 1) throw UserError("--n must be >= 1");
  if (!fs::exists(ckpt)) throw UserError("no such checkpoint: " + ckpt.string());
  const trainer::TrainState st = trainer::restore(ckpt, nullptr);
  const auto select = which == "best-g" ? trainer::GeneratorSelect::BestG
                                        : trainer::GeneratorSelect::Latest;
  const models::Generator gen = trainer::generator_from_state(st, select);
  // The z batch depends only on --seed, so different checkpoints sampled with
  // the same seed get identical latent inputs (side-by-side comparisons).
  Rng rng = Rng::seeded(Rng::mix(seed, 0x5A11));
  const Tensor z = trainer::sample_z(rng, n, gen.spec.z_dim);
  nn::Tape tape;
  const Tensor imgs = gen.forward(z, tape, false);
  image_io::write_png(out, image_io::make_grid(imgs));
  std::cout << "wrote " << out.string() << " (" << n << " samples, seed " << seed << ", "
            << which << " generator)\n";
  return 0;
}

int cmd_eval(const RunSettings& s, const fs::path& ckpt, const std::string& which,
             const fs::path& report_path) {
  if (!fs::exists(ckpt)) throw UserError("no such checkpoint: " + ckpt.string());
  auto data = dataio::open_dataset(s.dataset);
  const trainer::TrainState st = trainer::restore(ckpt, nullptr);
  const auto select = which == "best-g" ? trainer::GeneratorSelect::BestG
                                        : trainer::GeneratorSelect::Latest;
  const models::Generator gen = trainer::generator_from_state(st, select);
  const auto extractor = make_extractor(s.extractor);
  const double fid = evalfid::evaluate(gen, *data, *extractor, s.eval_n_samples, s.eval_seed);

  const int64_t snap_iter = select == trainer::GeneratorSelect::BestG ? st.best_g_iteration
                                                                      : st.iteration;
  json report{{"checkpoint_id", ckpt.filename().string() + ":iter=" + std::to_string(snap_iter) +
                                    ":" + which},
              {"extractor_id", extractor->id()},
              {"n_samples", s.eval_n_samples},
              {"seed", s.eval_seed},
              {"fid", fid}};
  std::cout << report.dump() << "\n";
  if (!report_path.empty()) {
    std::ofstream os(report_path, std::ios::binary);
    os << report.dump() << "\n";
    if (!os) throw std::runtime_error("cannot write report to " + report_path.string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN training toolkit with a tile-deshuffling self-supervision task (v" +
               std::string(kVersion) + ")"};
  app.require_subcommand(1);

  RunSettings s;
  s.train.image_size = 48;
  s.train.base_width_g = 16;
  s.train.base_width_d = 16;
  s.train.total_iterations = 1500;
  s.train.checkpoint_every = 500;
  s.train.sample_every = 500;
  s.dataset.synthetic.n_samples = 2000;
  s.dataset.synthetic.seed = 7;

  std::string config_path, loss_name, deshuffle_flag, data_path, out_root_flag;
  std::optional<double> alpha_flag, beta_flag;
  std::optional<int64_t> iters_flag, batch_flag;
  std::optional<uint64_t> seed_flag;
  std::optional<int> image_size_flag;

  auto* train = app.add_subcommand("train", "Train a model (config file + flag overrides)");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--loss", loss_name, "standard|ras|rals|rahinge");
  train->add_option("--alpha", alpha_flag, "weight of the D deshuffle term");
  train->add_option("--beta", beta_flag, "weight of the G deshuffle term");
  train->add_option("--deshuffle", deshuffle_flag, "on|off");
  train->add_option("--iterations", iters_flag, "total training iterations");
  train->add_option("--batch-size", batch_flag, "samples per step");
  train->add_option("--seed", seed_flag, "master seed");
  train->add_option("--image-size", image_size_flag, "square image size");
  train->add_option("--data", data_path, "image folder (default: synthetic dataset)");
  train->add_option("--out-root", out_root_flag, "run directory root");

  int tiles = 9;
  int64_t perm_k = 30;
  uint64_t perm_seed = 1;
  std::string perm_out = "perms.txt";
  auto* perms = app.add_subcommand("perms", "Generate a max-min-Hamming permutation set");
  perms->add_option("--tiles", tiles, "tile count (default 9)");
  perms->add_option("--k", perm_k, "number of permutations (default 30)");
  perms->add_option("--seed", perm_seed, "pool seed (inert for tiles <= 9)");
  perms->add_option("--out", perm_out, "output path")->required();

  std::string ckpt_path, generator_which = "latest", grid_out = "samples.png";
  int64_t sample_n = 64;
  uint64_t sample_seed = 1;
  auto* sample = app.add_subcommand("sample", "Write a sample grid from a checkpoint");
  sample->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  sample->add_option("--n", sample_n, "number of samples (grid is ~sqrt(n) columns)");
  sample->add_option("--seed", sample_seed, "z seed (shared across checkpoints)");
  sample->add_option("--out", grid_out, "output PNG path");
  sample->add_option("--generator", generator_which, "latest|best-g");

  std::string eval_ckpt, eval_which = "latest", eval_report;
  std::string ext_kind, ext_cmd;
  std::optional<uint64_t> ext_seed;
  std::optional<int64_t> ext_dim, eval_n;
  std::optional<uint64_t> eval_seed_flag;
  auto* eval = app.add_subcommand("eval", "Frechet-distance evaluation of a checkpoint");
  eval->add_option("--config", config_path, "JSON config file (dataset + eval settings)");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--generator", eval_which, "latest|best-g (best-g = min-L_G snapshot)");
  eval->add_option("--data", data_path, "image folder (default: synthetic dataset)");
  eval->add_option("--image-size", image_size_flag, "square image size of the dataset");
  eval->add_option("--extractor", ext_kind, "toy|cmd");
  eval->add_option("--extractor-seed", ext_seed, "toy extractor seed");
  eval->add_option("--extractor-dim", ext_dim, "feature dimension");
  eval->add_option("--extractor-cmd", ext_cmd, "subprocess extractor command");
  eval->add_option("--n-samples", eval_n, "samples per side");
  eval->add_option("--seed", eval_seed_flag, "evaluation seed");
  eval->add_option("--report", eval_report, "also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) apply_config_file(s, config_path);
    // Flags override file values.
    if (!loss_name.empty()) s.train.loss_variant = losses::variant_from_name(loss_name);
    if (alpha_flag) s.train.alpha = *alpha_flag;
    if (beta_flag) s.train.beta = *beta_flag;
    if (!deshuffle_flag.empty()) {
      if (deshuffle_flag != "on" && deshuffle_flag != "off")
        throw UserError("--deshuffle must be on|off");
      s.train.deshuffle_enabled = deshuffle_flag == "on";
    }
    if (iters_flag) s.train.total_iterations = *iters_flag;
    if (batch_flag) s.train.batch_size = *batch_flag;
    if (seed_flag) s.train.seed = *seed_flag;
    if (image_size_flag) s.train.image_size = *image_size_flag;
    if (!data_path.empty()) {
      s.dataset.source = dataio::Source::ImageFolder;
      s.dataset.root = data_path;
    }
    if (!ext_kind.empty()) s.extractor.kind = ext_kind;
    if (ext_seed) s.extractor.seed = *ext_seed;
    if (ext_dim) s.extractor.dim = *ext_dim;
    if (!ext_cmd.empty()) {
      s.extractor.command = ext_cmd;
      if (ext_kind.empty()) s.extractor.kind = "cmd";
    }
    if (eval_n) s.eval_n_samples = *eval_n;
    if (eval_seed_flag) s.eval_seed = *eval_seed_flag;
    s.dataset.image_size = s.train.image_size;

    if (train->parsed()) return cmd_train(s, out_root_flag);
    if (perms->parsed()) return cmd_perms(tiles, perm_k, perm_seed, perm_out);
    if (sample->parsed()) {
      if (generator_which != "latest" && generator_which != "best-g")
        throw UserError("--generator must be latest|best-g");
      return cmd_sample(ckpt_path, sample_n, sample_seed, grid_out, generator_which);
    }
    if (eval->parsed()) {
      if (eval_which != "latest" && eval_which != "best-g")
        throw UserError("--generator must be latest|best-g");
      return cmd_eval(s, eval_ckpt, eval_which, eval_report);
    }
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const image_io::CodecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const trainer::IncompatibleCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
