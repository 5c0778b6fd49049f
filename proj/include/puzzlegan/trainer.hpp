#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>

#include "puzzlegan/dataio.hpp"
#include "puzzlegan/losses.hpp"
#include "puzzlegan/models.hpp"
#include "puzzlegan/permset.hpp"
#include "puzzlegan/shuffler.hpp"

namespace puzzlegan::trainer {

struct AdamHP {
  double lr_g = 2e-4, lr_d = 2e-4;
  double beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
};

struct TrainConfig {
  losses::Variant loss_variant = losses::Variant::RaS;
  double alpha = 1.0;  // weight of the discriminator's deshuffle term
  double beta = 0.2;   // weight of the generator's deshuffle term
  int64_t batch_size = 32;
  int64_t total_iterations = 0;
  uint64_t seed = 1;
  AdamHP adam;
  bool deshuffle_enabled = true;
  int64_t z_dim = 128;
  int image_size = 128;
  int64_t k_perm = 30;
  int tile_count = 9;  // the training path supports exactly 9
  int64_t base_width_g = 64;
  int64_t base_width_d = 64;
  int64_t checkpoint_every = 0;  // 0 = final checkpoint only
  int64_t sample_every = 0;      // 0 = never
  int64_t log_every = 1;
};

void validate_config(const TrainConfig& cfg);

struct StepReport {
  int64_t iteration = 0;
  losses::LossTerms terms;
  double acc_real = 0;  // deshuffle accuracy on S_real
  double acc_fake = 0;  // deshuffle accuracy on S_fake
  double wall_time_s = 0;
};

// Diagnostic ablation hook: scales the adversarial term of either phase.
// Both default to 1; the CLI never touches this.
struct StepScales {
  double adv_d = 1.0;
  double adv_g = 1.0;
};

struct TrainState {
  TrainConfig cfg;
  int64_t iteration = 0;
  models::Generator gen;
  models::Discriminator disc;
  nn::Adam opt_g, opt_d;
  // Independent streams: z sampling and permutation draws here, data order
  // inside the dataset handle. Disabling deshuffling therefore never perturbs
  // z sampling.
  Rng z_rng, perm_rng;
  permset::PermutationSet perms;
  shuffler::ShuffleGeometry geom;
  double best_g_loss = std::numeric_limits<double>::infinity();
  int64_t best_g_iteration = -1;
  std::vector<float> best_g_params, best_g_buffers;  // min-L_G generator snapshot
  std::string dataset_fingerprint;
};

// Training aborted on a non-finite loss term; message names the term and the
// iteration.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IncompatibleCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TrainState init_state(const TrainConfig& cfg);

// One D update then one G update (n_critic = 1):
//   D phase: fresh z -> X_fake (detached from G); d_adv on (X_real, X_fake);
//   S_real = shuffle(X_real); v_disc = deshuffle CE on D_perm(S_real) only --
//   S_fake never reaches D's deshuffle loss. D steps on d_adv + alpha*v_disc.
//   G phase: fresh z -> X_fake with gradients flowing; g_adv per variant
//   (critic scores on X_real recomputed, D frozen); S_fake = shuffle(X_fake)
//   with gradients flowing through the tile rearrangement; v_gen = deshuffle
//   CE on D_perm(S_fake), D frozen. G steps on g_adv + beta*v_gen.
// "Frozen" means gradients pass through D without touching its parameter
// grads, so a G step can never move D, and vice versa.
StepReport train_step(TrainState& state, const Tensor& real_batch,
                      const StepScales& scales = {});

struct ArtifactSink {
  std::filesystem::path run_dir;  // empty = no file artifacts
  std::function<void(const StepReport&)> on_report;
};

// Runs state.cfg.total_iterations steps over cyclic batches from data,
// emitting metrics/checkpoints/sample grids into sink.run_dir when set.
TrainState train(const TrainConfig& cfg, dataio::Dataset& data, const ArtifactSink& sink = {});
TrainState train_resume(const std::filesystem::path& checkpoint, dataio::Dataset& data,
                        const ArtifactSink& sink = {});

// Versioned binary container (magic, schema version, config digest). Includes
// both rng streams, optimizer state, the dataset iterator position, and the
// min-L_G generator snapshot; restore continues bit-identically.
void snapshot(const TrainState& state, const dataio::Dataset* data,
              const std::filesystem::path& path);
TrainState restore(const std::filesystem::path& path, dataio::Dataset* data);

// Rebuilds a generator from the snapshot the checkpoint carries.
enum class GeneratorSelect { Latest, BestG };
models::Generator generator_from_state(const TrainState& state, GeneratorSelect which);

Tensor sample_z(Rng& rng, int64_t n, int64_t z_dim);

std::string metrics_json_line(const StepReport& r);

}  // namespace puzzlegan::trainer
