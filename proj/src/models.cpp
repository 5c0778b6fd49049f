#include "puzzlegan/models.hpp"

#include <stdexcept>

namespace puzzlegan::models {

std::pair<int, int> spatial_plan(int size) {
  if (size < 6) throw std::invalid_argument("spatial_plan: size must be >= 6");
  int s0 = size, k = 0;
  while (s0 % 2 == 0 && s0 / 2 >= 3) {
    s0 /= 2;
    ++k;
  }
  if (s0 > 8 || k < 1)
    throw std::invalid_argument("spatial_plan: size " + std::to_string(size) +
                                " is not s0*2^k with s0 in [3,8]");
  return {s0, k};
}

Generator build_generator(const GeneratorSpec& spec, Rng& init_rng) {
  if (spec.z_dim < 1 || spec.base_width < 1 || spec.out_channels != 3)
    throw std::invalid_argument("build_generator: invalid spec");
  const auto [s0, k] = spatial_plan(spec.out_size);
  const int64_t c0 = 8 * spec.base_width;
  if ((c0 >> (k - 1)) < 1)
    throw std::invalid_argument("build_generator: base_width too small for out_size");

  Generator g;
  g.spec = spec;
  g.net.emplace<nn::Linear>(spec.z_dim, c0 * s0 * s0);
  g.net.emplace<nn::Reshape>(std::vector<int64_t>{c0, s0, s0});
  g.net.emplace<nn::BatchNorm2d>(c0);
  g.net.emplace<nn::LeakyReLU>(0.0f);  // plain relu
  int64_t ch = c0;
  for (int stage = 0; stage < k; ++stage) {
    const bool last = stage == k - 1;
    const int64_t next = last ? spec.out_channels : ch / 2;
    g.net.emplace<nn::ConvTranspose2d>(ch, next, 4, 2, 1);
    if (!last) {
      g.net.emplace<nn::BatchNorm2d>(next);
      g.net.emplace<nn::LeakyReLU>(0.0f);
    } else {
      g.net.emplace<nn::Tanh>();
    }
    ch = next;
  }
  g.net.init(init_rng);
  return g;
}

Discriminator build_discriminator(const DiscriminatorSpec& spec, Rng& init_rng) {
  if (spec.in_channels != 3 || spec.base_width < 1 || spec.k_perm < 2)
    throw std::invalid_argument("build_discriminator: invalid spec");
  const auto [s0, k] = spatial_plan(spec.in_size);

  Discriminator d;
  d.spec = spec;
  int64_t ch = spec.in_channels;
  for (int stage = 0; stage < k; ++stage) {
    const int64_t next = spec.base_width << stage;
    d.trunk.emplace<nn::Conv2d>(ch, next, 4, 2, 1);
    if (stage > 0) d.trunk.emplace<nn::BatchNorm2d>(next);
    d.trunk.emplace<nn::LeakyReLU>(0.2f);
    ch = next;
  }
  // Valid convs over the full trunk window collapse to 1x1.
  d.rf_head.emplace<nn::Conv2d>(ch, 1, s0, 1, 0);
  d.rf_head.emplace<nn::Reshape>(std::vector<int64_t>{});  // N scores
  d.perm_head.emplace<nn::Conv2d>(ch, spec.k_perm, s0, 1, 0);
  d.perm_head.emplace<nn::Reshape>(std::vector<int64_t>{spec.k_perm});

  d.trunk.init(init_rng);
  d.rf_head.init(init_rng);
  d.perm_head.init(init_rng);
  return d;
}

DiscriminatorOutputs Discriminator::forward(const Tensor& x, DiscTape& rf_tape,
                                            DiscTape& perm_tape, bool training) const {
  const Tensor h = trunk.forward(x, rf_tape.trunk, training);
  perm_tape.trunk = rf_tape.trunk;  // same trunk activations feed both heads
  DiscriminatorOutputs out;
  out.rf_score = rf_head.forward(h, rf_tape.head, training);
  out.perm_logits = perm_head.forward(h, perm_tape.head, training);
  return out;
}

Tensor Discriminator::forward_rf(const Tensor& x, DiscTape& tape, bool training) const {
  const Tensor h = trunk.forward(x, tape.trunk, training);
  return rf_head.forward(h, tape.head, training);
}

Tensor Discriminator::forward_perm(const Tensor& x, DiscTape& tape, bool training) const {
  const Tensor h = trunk.forward(x, tape.trunk, training);
  return perm_head.forward(h, tape.head, training);
}

Tensor Discriminator::backward_rf(const Tensor& gy, const DiscTape& tape, bool param_grads) const {
  const Tensor gh = rf_head.backward(gy, tape.head, param_grads);
  return trunk.backward(gh, tape.trunk, param_grads);
}

Tensor Discriminator::backward_perm(const Tensor& gy, const DiscTape& tape, bool param_grads) const {
  const Tensor gh = perm_head.backward(gy, tape.head, param_grads);
  return trunk.backward(gh, tape.trunk, param_grads);
}

std::vector<Tensor*> Discriminator::params() const {
  auto v = trunk.params();
  auto r = rf_head.params();
  auto p = perm_head.params();
  v.insert(v.end(), r.begin(), r.end());
  v.insert(v.end(), p.begin(), p.end());
  return v;
}

std::vector<Tensor*> Discriminator::grads() const {
  auto v = trunk.grads();
  auto r = rf_head.grads();
  auto p = perm_head.grads();
  v.insert(v.end(), r.begin(), r.end());
  v.insert(v.end(), p.begin(), p.end());
  return v;
}

std::vector<Tensor*> Discriminator::buffers() const {
  auto v = trunk.buffers();
  auto r = rf_head.buffers();
  auto p = perm_head.buffers();
  v.insert(v.end(), r.begin(), r.end());
  v.insert(v.end(), p.begin(), p.end());
  return v;
}

void Discriminator::zero_grads() const {
  for (Tensor* g : grads()) g->fill(0.0f);
}

int64_t count_parameters(const Generator& g) { return nn::count_parameters(g.net); }

int64_t count_parameters(const Discriminator& d) {
  return nn::count_parameters(d.trunk) + nn::count_parameters(d.rf_head) +
         nn::count_parameters(d.perm_head);
}

}  // namespace puzzlegan::models
