#include "puzzlegan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "puzzlegan/image_io.hpp"
#include "puzzlegan/serialize.hpp"
#include "puzzlegan/version.hpp"

namespace puzzlegan::trainer {

namespace {

constexpr char kMagic[8] = {'P', 'Z', 'G', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kSchemaVersion = 1;

// Stream tags for deriving independent rngs from the config seed.
enum : uint64_t { kStreamInit = 0, kStreamZ = 1, kStreamPerm = 2, kStreamVis = 4 };

const permset::PermutationSet& cached_perm_set(int tiles, int64_t k, uint64_t seed) {
  static std::mutex mu;
  static std::map<std::tuple<int, int64_t, uint64_t>, permset::PermutationSet> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(tiles, k, seed);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, permset::generate_set(tiles, k, seed)).first;
  return it->second;
}

std::vector<double> to_dvec(const Tensor& t) {
  std::vector<double> v(size_t(t.numel()), 0.0);
  for (int64_t i = 0; i < t.numel(); ++i) v[size_t(i)] = double(t[i]);
  return v;
}

Tensor grad_tensor(const std::vector<double>& g, double scale, const std::vector<int64_t>& shape) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(g[size_t(i)] * scale);
  return t;
}

losses::PermLogits to_permlogits(const Tensor& t) {
  losses::PermLogits p;
  p.n = t.size(0);
  p.k = t.size(1);
  p.v = to_dvec(t);
  return p;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  int64_t hits = 0;
  for (int64_t i = 0; i < logits.size(0); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < logits.size(1); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    hits += best == labels[size_t(i)];
  }
  return double(hits) / double(logits.size(0));
}

void check_term(double v, const char* term, int64_t iteration) {
  if (!std::isfinite(v))
    throw TrainingDiverged(std::string("non-finite ") + term + " at iteration " +
                           std::to_string(iteration));
}

void check_scores(const Tensor& t, const char* term, int64_t iteration) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i]))
      throw TrainingDiverged(std::string("non-finite ") + term + " at iteration " +
                             std::to_string(iteration));
}

std::string serialize_cfg(const TrainConfig& cfg) {
  std::ostringstream os;
  serialize::Writer w(os);
  w.u8(uint8_t(cfg.loss_variant));
  w.f64(cfg.alpha);
  w.f64(cfg.beta);
  w.i64(cfg.batch_size);
  w.i64(cfg.total_iterations);
  w.u64(cfg.seed);
  w.f64(cfg.adam.lr_g);
  w.f64(cfg.adam.lr_d);
  w.f64(cfg.adam.beta1);
  w.f64(cfg.adam.beta2);
  w.f64(cfg.adam.eps);
  w.u8(cfg.deshuffle_enabled ? 1 : 0);
  w.i64(cfg.z_dim);
  w.i64(cfg.image_size);
  w.i64(cfg.k_perm);
  w.i64(cfg.tile_count);
  w.i64(cfg.base_width_g);
  w.i64(cfg.base_width_d);
  w.i64(cfg.checkpoint_every);
  w.i64(cfg.sample_every);
  w.i64(cfg.log_every);
  return os.str();
}

TrainConfig deserialize_cfg(const std::string& blob) {
  std::istringstream is(blob);
  serialize::Reader r(is);
  TrainConfig cfg;
  cfg.loss_variant = losses::Variant(r.u8());
  cfg.alpha = r.f64();
  cfg.beta = r.f64();
  cfg.batch_size = r.i64();
  cfg.total_iterations = r.i64();
  cfg.seed = r.u64();
  cfg.adam.lr_g = r.f64();
  cfg.adam.lr_d = r.f64();
  cfg.adam.beta1 = r.f64();
  cfg.adam.beta2 = r.f64();
  cfg.adam.eps = r.f64();
  cfg.deshuffle_enabled = r.u8() != 0;
  cfg.z_dim = r.i64();
  cfg.image_size = r.i64();
  cfg.k_perm = r.i64();
  cfg.tile_count = r.i64();
  cfg.base_width_g = r.i64();
  cfg.base_width_d = r.i64();
  cfg.checkpoint_every = r.i64();
  cfg.sample_every = r.i64();
  cfg.log_every = r.i64();
  return cfg;
}

// Models and optimizer slots sized from cfg; parameter values unspecified.
TrainState make_skeleton(const TrainConfig& cfg) {
  validate_config(cfg);
  TrainState st;
  st.cfg = cfg;
  Rng init = Rng::seeded(Rng::mix(cfg.seed, kStreamInit));
  st.gen = models::build_generator(
      {cfg.z_dim, 3, cfg.image_size, cfg.base_width_g}, init);
  st.disc = models::build_discriminator(
      {3, cfg.image_size, cfg.base_width_d, cfg.k_perm}, init);
  st.opt_g = nn::Adam(st.gen.net.params(), st.gen.net.grads(), cfg.adam.lr_g, cfg.adam.beta1,
                      cfg.adam.beta2, cfg.adam.eps);
  st.opt_d = nn::Adam(st.disc.params(), st.disc.grads(), cfg.adam.lr_d, cfg.adam.beta1,
                      cfg.adam.beta2, cfg.adam.eps);
  st.geom = shuffler::compute_geometry(cfg.image_size, cfg.image_size);
  return st;
}

void save_adam(serialize::Writer& w, const nn::Adam& opt) {
  w.i64(opt.t());
  std::vector<Tensor*> ms, vs;
  for (auto& t : opt.m()) ms.push_back(const_cast<Tensor*>(&t));
  for (auto& t : opt.v()) vs.push_back(const_cast<Tensor*>(&t));
  w.f32v(nn::flatten(ms));
  w.f32v(nn::flatten(vs));
}

void load_adam(serialize::Reader& r, nn::Adam& opt) {
  opt.set_t(r.i64());
  std::vector<Tensor*> ms, vs;
  for (auto& t : opt.m()) ms.push_back(&t);
  for (auto& t : opt.v()) vs.push_back(&t);
  nn::unflatten(r.f32v(), ms);
  nn::unflatten(r.f32v(), vs);
}

void write_perms(serialize::Writer& w, const permset::PermutationSet& set) {
  w.i64(set.tile_count);
  w.u64(set.generation_seed);
  w.i64(set.min_pairwise_hamming);
  w.i64(set.k());
  for (const auto& p : set.permutations) w.intv(p.order);
}

permset::PermutationSet read_perms(serialize::Reader& r) {
  permset::PermutationSet set;
  set.tile_count = int(r.i64());
  set.generation_seed = r.u64();
  set.min_pairwise_hamming = int(r.i64());
  const int64_t k = r.i64();
  for (int64_t i = 0; i < k; ++i) set.permutations.push_back({r.intv()});
  return set;
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (cfg.batch_size < 2) bad("batch_size must be >= 2 (relativistic means and label variety)");
  if (cfg.alpha < 0 || cfg.beta < 0) bad("alpha and beta must be >= 0");
  if (cfg.total_iterations < 0) bad("total_iterations must be >= 0");
  if (cfg.z_dim < 1) bad("z_dim must be >= 1");
  if (cfg.tile_count != 9) bad("tile_count must be 9 (3x3 grid) on the training path");
  if (cfg.k_perm < 2) bad("k_perm must be >= 2");
  if (cfg.image_size < 9) bad("image_size must be >= 9");
  if (cfg.base_width_g < 1 || cfg.base_width_d < 1) bad("base widths must be >= 1");
  if (cfg.adam.lr_g <= 0 || cfg.adam.lr_d <= 0) bad("learning rates must be > 0");
  if (cfg.log_every < 1) bad("log_every must be >= 1");
  if (cfg.checkpoint_every < 0 || cfg.sample_every < 0) bad("periods must be >= 0");
  models::spatial_plan(cfg.image_size);  // throws for unsupported sizes
}

TrainState init_state(const TrainConfig& cfg) {
  TrainState st = make_skeleton(cfg);
  st.z_rng = Rng::seeded(Rng::mix(cfg.seed, kStreamZ));
  st.perm_rng = Rng::seeded(Rng::mix(cfg.seed, kStreamPerm));
  st.perms = cached_perm_set(cfg.tile_count, cfg.k_perm, cfg.seed);
  return st;
}

Tensor sample_z(Rng& rng, int64_t n, int64_t z_dim) {
  Tensor z({n, z_dim});
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = float(rng.normal());
  return z;
}

StepReport train_step(TrainState& state, const Tensor& real_batch, const StepScales& scales) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig& cfg = state.cfg;
  if (real_batch.dim() != 4 || real_batch.size(0) != cfg.batch_size)
    throw std::invalid_argument("train_step: real batch must be batch_size x C x H x W");
  const int64_t iter = state.iteration + 1;

  double v_disc = 0, v_gen = 0, acc_real = 0, acc_fake = 0;

  // --- D phase ---------------------------------------------------------
  state.disc.zero_grads();
  Tensor z1 = sample_z(state.z_rng, cfg.batch_size, cfg.z_dim);
  nn::Tape gen_tape_d;
  const Tensor x_fake = state.gen.forward(z1, gen_tape_d, true);  // detached below

  models::DiscTape tape_real, tape_fake;
  const Tensor c_real = state.disc.forward_rf(real_batch, tape_real, true);
  const Tensor c_fake = state.disc.forward_rf(x_fake, tape_fake, true);
  check_scores(c_real, "critic scores on X_real (D phase)", iter);
  check_scores(c_fake, "critic scores on X_fake (D phase)", iter);
  losses::CriticOutputs crit{to_dvec(c_real), to_dvec(c_fake)};
  const losses::AdvLoss adv_d = losses::adversarial_losses(cfg.loss_variant, crit, true);
  check_term(adv_d.d_adv, "d_adv", iter);

  if (cfg.deshuffle_enabled) {
    const shuffler::ShuffleResult s_real = shuffler::shuffle(real_batch, state.perms, state.perm_rng);
    models::DiscTape tape_perm;
    const Tensor plog = state.disc.forward_perm(s_real.shuffled, tape_perm, true);
    check_scores(plog, "permutation logits on S_real", iter);
    const losses::DeshuffleLoss dl = losses::deshuffle_loss(to_permlogits(plog), s_real.labels,
                                                            cfg.alpha > 0);
    check_term(dl.value, "v_disc", iter);
    v_disc = dl.value;
    acc_real = accuracy(plog, s_real.labels);
    if (cfg.alpha > 0)
      state.disc.backward_perm(grad_tensor(dl.grad.v, cfg.alpha, plog.shape()), tape_perm, true);
  }
  if (scales.adv_d != 0.0) {
    state.disc.backward_rf(grad_tensor(adv_d.d_grad_real, scales.adv_d, c_real.shape()),
                           tape_real, true);
    state.disc.backward_rf(grad_tensor(adv_d.d_grad_fake, scales.adv_d, c_fake.shape()),
                           tape_fake, true);
  }
  state.opt_d.step();

  // --- G phase ---------------------------------------------------------
  state.gen.net.zero_grads();
  Tensor z2 = sample_z(state.z_rng, cfg.batch_size, cfg.z_dim);
  nn::Tape gen_tape;
  const Tensor x_fake2 = state.gen.forward(z2, gen_tape, true);

  models::DiscTape tape_real2, tape_fake2;
  const Tensor c_real2 = state.disc.forward_rf(real_batch, tape_real2, true);
  const Tensor c_fake2 = state.disc.forward_rf(x_fake2, tape_fake2, true);
  check_scores(c_real2, "critic scores on X_real (G phase)", iter);
  check_scores(c_fake2, "critic scores on X_fake (G phase)", iter);
  const losses::AdvLoss adv_g = losses::adversarial_losses(
      cfg.loss_variant, {to_dvec(c_real2), to_dvec(c_fake2)}, true);
  check_term(adv_g.g_adv, "g_adv", iter);

  Tensor gx_fake = Tensor::zeros_like(x_fake2);
  if (scales.adv_g != 0.0) {
    // The grad through c_real2 only reaches the (constant) data, so that
    // backward pass is skipped entirely; D stays frozen either way.
    gx_fake = state.disc.backward_rf(grad_tensor(adv_g.g_grad_fake, scales.adv_g, c_fake2.shape()),
                                     tape_fake2, false);
  }
  if (cfg.deshuffle_enabled) {
    const shuffler::ShuffleResult s_fake = shuffler::shuffle(x_fake2, state.perms, state.perm_rng);
    models::DiscTape tape_perm2;
    const Tensor plog2 = state.disc.forward_perm(s_fake.shuffled, tape_perm2, true);
    check_scores(plog2, "permutation logits on S_fake", iter);
    const losses::DeshuffleLoss dl2 = losses::deshuffle_loss(to_permlogits(plog2), s_fake.labels,
                                                             cfg.beta > 0);
    check_term(dl2.value, "v_gen", iter);
    v_gen = dl2.value;
    acc_fake = accuracy(plog2, s_fake.labels);
    if (cfg.beta > 0) {
      const Tensor g_shuffled = state.disc.backward_perm(
          grad_tensor(dl2.grad.v, cfg.beta, plog2.shape()), tape_perm2, false);
      const Tensor g_through = shuffler::shuffle_backward(g_shuffled, s_fake.labels, state.perms,
                                                          s_fake.geometry);
      kernels::axpy(gx_fake, g_through, 1.0f);
    }
  }
  state.gen.backward(gx_fake, gen_tape, true);
  state.opt_g.step();

  // --- bookkeeping -----------------------------------------------------
  state.iteration = iter;
  StepReport rep;
  rep.iteration = iter;
  rep.terms = losses::combine(adv_d.d_adv, adv_g.g_adv, v_disc, v_gen, cfg.alpha, cfg.beta);
  if (!cfg.deshuffle_enabled) {
    rep.terms.d_total = adv_d.d_adv;
    rep.terms.g_total = adv_g.g_adv;
  }
  check_term(rep.terms.d_total, "d_total", iter);
  check_term(rep.terms.g_total, "g_total", iter);
  rep.acc_real = acc_real;
  rep.acc_fake = acc_fake;

  if (rep.terms.g_total < state.best_g_loss) {
    state.best_g_loss = rep.terms.g_total;
    state.best_g_iteration = iter;
    state.best_g_params = nn::flatten(state.gen.net.params());
    state.best_g_buffers = nn::flatten(state.gen.net.buffers());
  }

  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string metrics_json_line(const StepReport& r) {
  nlohmann::json j{{"iteration", r.iteration}, {"d_adv", r.terms.d_adv},
                   {"g_adv", r.terms.g_adv},   {"v_disc", r.terms.v_disc},
                   {"v_gen", r.terms.v_gen},   {"d_total", r.terms.d_total},
                   {"g_total", r.terms.g_total}, {"acc_real", r.acc_real},
                   {"acc_fake", r.acc_fake}};
  return j.dump();
}

namespace {

void write_config_echo(const TrainConfig& cfg, const std::string& fingerprint,
                       const std::filesystem::path& dir) {
  nlohmann::json j{
      {"version", kVersion},
      {"loss", losses::variant_name(cfg.loss_variant)},
      {"alpha", cfg.alpha},
      {"beta", cfg.beta},
      {"batch_size", cfg.batch_size},
      {"iterations", cfg.total_iterations},
      {"seed", cfg.seed},
      {"deshuffle", cfg.deshuffle_enabled},
      {"z_dim", cfg.z_dim},
      {"image_size", cfg.image_size},
      {"k_perm", cfg.k_perm},
      {"tile_count", cfg.tile_count},
      {"base_width_g", cfg.base_width_g},
      {"base_width_d", cfg.base_width_d},
      {"lr_g", cfg.adam.lr_g},
      {"lr_d", cfg.adam.lr_d},
      {"adam_beta1", cfg.adam.beta1},
      {"adam_beta2", cfg.adam.beta2},
      {"checkpoint_every", cfg.checkpoint_every},
      {"sample_every", cfg.sample_every},
      {"log_every", cfg.log_every},
      {"dataset_fingerprint", fingerprint},
  };
  std::ofstream os(dir / "config.json", std::ios::binary);
  os << j.dump(2) << "\n";
}

void write_sample_grid(const TrainState& state, const std::filesystem::path& path);

TrainState run_loop(TrainState state, dataio::Dataset& data, const ArtifactSink& sink) {
  const TrainConfig& cfg = state.cfg;
  if (data.image_size() != cfg.image_size)
    throw std::invalid_argument("train: dataset image_size " + std::to_string(data.image_size()) +
                                " does not match config image_size " +
                                std::to_string(cfg.image_size));
  if (state.dataset_fingerprint.empty())
    state.dataset_fingerprint = data.fingerprint();
  else if (state.dataset_fingerprint != data.fingerprint())
    throw std::invalid_argument("train: dataset fingerprint mismatch with checkpoint:\n  ckpt: " +
                                state.dataset_fingerprint + "\n  data: " + data.fingerprint());

  const bool artifacts = !sink.run_dir.empty();
  std::ofstream metrics;
  if (artifacts) {
    std::filesystem::create_directories(sink.run_dir);
    write_config_echo(cfg, state.dataset_fingerprint, sink.run_dir);
    metrics.open(sink.run_dir / "metrics.jsonl", std::ios::binary | std::ios::app);
    if (!metrics) throw std::runtime_error("train: cannot open metrics log");
  }

  char name[64];
  while (state.iteration < cfg.total_iterations) {
    const Tensor real = data.next_batch(cfg.batch_size);
    const StepReport rep = train_step(state, real);
    if (artifacts && rep.iteration % cfg.log_every == 0) {
      metrics << metrics_json_line(rep) << "\n";
      metrics.flush();
      if (!metrics) throw std::runtime_error("train: metrics log write failed");
    }
    if (sink.on_report) sink.on_report(rep);
    if (artifacts && cfg.checkpoint_every > 0 && rep.iteration % cfg.checkpoint_every == 0) {
      std::snprintf(name, sizeof(name), "ckpt-%06lld.bin", (long long)rep.iteration);
      snapshot(state, &data, sink.run_dir / name);
    }
    if (artifacts && cfg.sample_every > 0 && rep.iteration % cfg.sample_every == 0) {
      std::snprintf(name, sizeof(name), "samples-%06lld.png", (long long)rep.iteration);
      write_sample_grid(state, sink.run_dir / name);
    }
  }
  if (artifacts) snapshot(state, &data, sink.run_dir / "ckpt-final.bin");
  return state;
}

}  // namespace

TrainState train(const TrainConfig& cfg, dataio::Dataset& data, const ArtifactSink& sink) {
  return run_loop(init_state(cfg), data, sink);
}

TrainState train_resume(const std::filesystem::path& checkpoint, dataio::Dataset& data,
                        const ArtifactSink& sink) {
  return run_loop(restore(checkpoint, &data), data, sink);
}

void snapshot(const TrainState& state, const dataio::Dataset* data,
              const std::filesystem::path& path) {
  const std::string cfg_blob = serialize_cfg(state.cfg);
  serialize::atomic_write(path, [&](std::ostream& os) {
    serialize::Writer w(os);
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kSchemaVersion);
    w.u64(serialize::fnv1a(cfg_blob));
    w.str(cfg_blob);
    w.i64(state.iteration);
    w.rng_state(state.z_rng.state());
    w.rng_state(state.perm_rng.state());
    write_perms(w, state.perms);
    w.str(state.dataset_fingerprint);
    w.f32v(nn::flatten(state.gen.net.params()));
    w.f32v(nn::flatten(state.gen.net.buffers()));
    w.f32v(nn::flatten(state.disc.params()));
    w.f32v(nn::flatten(state.disc.buffers()));
    save_adam(w, state.opt_g);
    save_adam(w, state.opt_d);
    w.f64(state.best_g_loss);
    w.i64(state.best_g_iteration);
    w.f32v(state.best_g_params);
    w.f32v(state.best_g_buffers);
    w.u8(data ? 1 : 0);
    if (data) data->save_iter_state(w);
  });
}

TrainState restore(const std::filesystem::path& path, dataio::Dataset* data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("restore: cannot open " + path.string());
  serialize::Reader r(is);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IncompatibleCheckpoint("restore: bad magic in " + path.string());
  const uint32_t version = r.u32();
  if (version != kSchemaVersion)
    throw IncompatibleCheckpoint("restore: checkpoint schema version " + std::to_string(version) +
                                 " unsupported (expected " + std::to_string(kSchemaVersion) + ")");
  const uint64_t digest = r.u64();
  const std::string cfg_blob = r.str();
  if (serialize::fnv1a(cfg_blob) != digest)
    throw IncompatibleCheckpoint("restore: config digest mismatch (corrupt or tampered header)");

  TrainState st = make_skeleton(deserialize_cfg(cfg_blob));
  st.iteration = r.i64();
  st.z_rng.set_state(r.rng_state());
  st.perm_rng.set_state(r.rng_state());
  st.perms = read_perms(r);
  st.dataset_fingerprint = r.str();
  nn::unflatten(r.f32v(), st.gen.net.params());
  nn::unflatten(r.f32v(), st.gen.net.buffers());
  nn::unflatten(r.f32v(), st.disc.params());
  nn::unflatten(r.f32v(), st.disc.buffers());
  load_adam(r, st.opt_g);
  load_adam(r, st.opt_d);
  st.best_g_loss = r.f64();
  st.best_g_iteration = r.i64();
  st.best_g_params = r.f32v();
  st.best_g_buffers = r.f32v();
  const bool has_data = r.u8() != 0;
  if (has_data) {
    if (data) {
      data->load_iter_state(r);
    } else {  // caller has no dataset; consume and drop the iterator state
      r.rng_state();
      r.i64v();
      r.i64();
    }
  }
  return st;
}

models::Generator generator_from_state(const TrainState& state, GeneratorSelect which) {
  Rng throwaway = Rng::seeded(0);
  models::Generator g = models::build_generator(
      {state.cfg.z_dim, 3, state.cfg.image_size, state.cfg.base_width_g}, throwaway);
  if (which == GeneratorSelect::BestG) {
    if (state.best_g_iteration < 0)
      throw std::runtime_error("generator_from_state: checkpoint has no best-g snapshot yet");
    nn::unflatten(state.best_g_params, g.net.params());
    nn::unflatten(state.best_g_buffers, g.net.buffers());
  } else {
    nn::unflatten(nn::flatten(state.gen.net.params()), g.net.params());
    nn::unflatten(nn::flatten(state.gen.net.buffers()), g.net.buffers());
  }
  return g;
}

namespace {
void write_sample_grid(const TrainState& state, const std::filesystem::path& path) {
  Rng vis = Rng::seeded(Rng::mix(state.cfg.seed, kStreamVis));
  const Tensor z = sample_z(vis, 64, state.cfg.z_dim);
  nn::Tape tape;
  const Tensor imgs = state.gen.forward(z, tape, false);
  image_io::write_png(path, image_io::make_grid(imgs));
}
}  // namespace

}  // namespace puzzlegan::trainer
