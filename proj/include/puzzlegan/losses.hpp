#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace puzzlegan::losses {

// Loss math runs in double precision; the float tensor path converts at this
// boundary. All sigmoids/softmaxes live here (the networks emit raw scores)
// and are evaluated through softplus / log-sum-exp identities -- a raw
// probability is never passed to log.

// Raw critic scores C(x) for the real and fake batches.
struct CriticOutputs {
  std::vector<double> c_real;
  std::vector<double> c_fake;
};

// N x K raw scores from the discriminator's permutation head, row-major.
struct PermLogits {
  int64_t n = 0;
  int64_t k = 0;
  std::vector<double> v;

  double at(int64_t i, int64_t j) const { return v[size_t(i * k + j)]; }
};

struct LossTerms {
  double d_adv = 0, g_adv = 0, v_disc = 0, v_gen = 0, d_total = 0, g_total = 0;
};

enum class Variant { Standard, RaS, RaLS, RaHinge };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);

// Adversarial loss values plus analytic gradients w.r.t. the critic scores.
// Gradient vectors are sized like the corresponding score vectors.
struct AdvLoss {
  double d_adv = 0;
  double g_adv = 0;
  std::vector<double> d_grad_real, d_grad_fake;  // d(d_adv)/d(scores)
  std::vector<double> g_grad_real, g_grad_fake;  // d(g_adv)/d(scores)
};

// Eq. (1)-style non-saturating pair:
//   d_adv = mean softplus(-c_real) + mean softplus(c_fake)
//   g_adv = mean softplus(-c_fake)
AdvLoss standard_gan_losses(const CriticOutputs& crit, bool with_grads = true);

// Relativistic average variants. With rt = c_real - mean(c_fake) and
// ft = c_fake - mean(c_real):
//   RaS:     d_adv = mean softplus(-rt) + mean softplus(ft)
//            g_adv = mean softplus(-ft) + mean softplus(rt)
//   RaLS:    d_adv = mean (rt-1)^2 + mean (ft+1)^2
//            g_adv = mean (ft-1)^2 + mean (rt+1)^2
//   RaHinge: d_adv = mean max(0, 1-rt) + mean max(0, 1+ft)
//            g_adv = mean max(0, 1-ft) + mean max(0, 1+rt)
// All four outputs are invariant to adding a constant to every score.
AdvLoss ras_losses(const CriticOutputs& crit, bool with_grads = true);
AdvLoss rals_losses(const CriticOutputs& crit, bool with_grads = true);
AdvLoss rahinge_losses(const CriticOutputs& crit, bool with_grads = true);

AdvLoss adversarial_losses(Variant v, const CriticOutputs& crit, bool with_grads = true);

// Mean over samples of cross-entropy between softmax(logits) and the one-hot
// permutation label; grad is (softmax - onehot)/N.
struct DeshuffleLoss {
  double value = 0;
  PermLogits grad;  // same N x K shape as the logits
};
DeshuffleLoss deshuffle_loss(const PermLogits& logits, const std::vector<int>& labels,
                             bool with_grads = true);

// Eq. (4): d_total = d_adv + alpha*v_disc, g_total = g_adv + beta*v_gen.
LossTerms combine(double d_adv, double g_adv, double v_disc, double v_gen,
                  double alpha = 1.0, double beta = 0.2);

// log(1 + e^x), overflow-safe.
double softplus(double x);
double sigmoid(double x);

}  // namespace puzzlegan::losses
