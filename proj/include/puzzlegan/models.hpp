#pragma once

#include <cstdint>
#include <utility>

#include "puzzlegan/nn.hpp"

namespace puzzlegan::models {

// Layer tables (declared convention, DCGAN-style):
//
// Generator, out_size = s0 * 2^k with s0 in [3, 8]:
//   linear  z_dim -> (8*base)*s0*s0, reshape to (8*base, s0, s0)
//   batchnorm + relu
//   k transposed-conv stages (kernel 4, stride 2, pad 1), channels halving
//   8b -> 4b -> ... ; hidden stages get batchnorm + relu, the last stage maps
//   to 3 channels and ends in tanh, so outputs live in [-1, 1].
//
// Discriminator, in_size decomposed the same way:
//   k conv stages (kernel 4, stride 2, pad 1), channels 3 -> b -> 2b -> ...,
//   leaky-relu 0.2, batchnorm on every stage but the first; the trunk ends at
//   s0 x s0. Heads are valid convs over the full s0 x s0 window: the r/f head
//   emits one raw score per sample (pre-sigmoid; losses own all sigmoids) and
//   the permutation head emits k_perm logits. Both heads read the same trunk
//   activations; trunk weights are shared, head parameters are disjoint.

struct GeneratorSpec {
  int64_t z_dim = 128;
  int out_channels = 3;
  int out_size = 128;
  int64_t base_width = 64;
};

struct DiscriminatorSpec {
  int in_channels = 3;
  int in_size = 128;
  int64_t base_width = 64;
  int64_t k_perm = 30;  // must equal the permutation set size used in training
};

// Decomposes size into (s0, k) with size = s0 * 2^k, 3 <= s0 <= 8, k >= 1.
// Throws std::invalid_argument for sizes outside that family.
std::pair<int, int> spatial_plan(int size);

struct Generator {
  GeneratorSpec spec;
  nn::Sequential net;

  Tensor forward(const Tensor& z, nn::Tape& tape, bool training) const {
    return net.forward(z, tape, training);
  }
  Tensor backward(const Tensor& gy, const nn::Tape& tape, bool param_grads = true) const {
    return net.backward(gy, tape, param_grads);
  }
};

struct DiscriminatorOutputs {
  Tensor rf_score;     // N raw critic scores
  Tensor perm_logits;  // N x K
};

struct DiscTape {
  nn::Tape trunk, head;
};

struct Discriminator {
  DiscriminatorSpec spec;
  nn::Sequential trunk;
  nn::Sequential rf_head;
  nn::Sequential perm_head;

  // One trunk pass feeding both heads.
  DiscriminatorOutputs forward(const Tensor& x, DiscTape& rf_tape, DiscTape& perm_tape,
                               bool training) const;

  Tensor forward_rf(const Tensor& x, DiscTape& tape, bool training) const;
  Tensor forward_perm(const Tensor& x, DiscTape& tape, bool training) const;

  // Returns grad w.r.t. the input batch.
  Tensor backward_rf(const Tensor& gy, const DiscTape& tape, bool param_grads) const;
  Tensor backward_perm(const Tensor& gy, const DiscTape& tape, bool param_grads) const;

  std::vector<Tensor*> params() const;
  std::vector<Tensor*> grads() const;
  std::vector<Tensor*> buffers() const;
  void zero_grads() const;
};

Generator build_generator(const GeneratorSpec& spec, Rng& init_rng);
Discriminator build_discriminator(const DiscriminatorSpec& spec, Rng& init_rng);

int64_t count_parameters(const Generator& g);
int64_t count_parameters(const Discriminator& d);

}  // namespace puzzlegan::models
