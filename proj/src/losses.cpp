#include "puzzlegan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace puzzlegan::losses {

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

void check_nonempty(const CriticOutputs& crit) {
  if (crit.c_real.empty() || crit.c_fake.empty())
    throw std::invalid_argument("adversarial loss: empty batch (relativistic terms need both batches)");
  check_finite(crit.c_real, "c_real");
  check_finite(crit.c_fake, "c_fake");
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Relativistic transforms: rt_i = c_real_i - mean(c_fake), ft_j = c_fake_j - mean(c_real).
struct Relativistic {
  std::vector<double> rt, ft;
  double n, m;  // |real|, |fake|
};

Relativistic relativize(const CriticOutputs& crit) {
  Relativistic r;
  const double mf = mean(crit.c_fake), mr = mean(crit.c_real);
  r.rt.reserve(crit.c_real.size());
  r.ft.reserve(crit.c_fake.size());
  for (double x : crit.c_real) r.rt.push_back(x - mf);
  for (double x : crit.c_fake) r.ft.push_back(x - mr);
  r.n = double(crit.c_real.size());
  r.m = double(crit.c_fake.size());
  return r;
}

// Given per-element derivatives of a loss w.r.t. rt and ft, chain them back to
// the raw scores: d/dc_real_k = drt_k - (1/n)*sum(dft), d/dc_fake_k = dft_k - (1/m)*sum(drt).
void chain_relativistic(const Relativistic& r, const std::vector<double>& drt,
                        const std::vector<double>& dft, std::vector<double>& greal,
                        std::vector<double>& gfake) {
  double sum_drt = 0, sum_dft = 0;
  for (double x : drt) sum_drt += x;
  for (double x : dft) sum_dft += x;
  greal.resize(drt.size());
  gfake.resize(dft.size());
  for (size_t i = 0; i < drt.size(); ++i) greal[i] = drt[i] - sum_dft / r.n;
  for (size_t j = 0; j < dft.size(); ++j) gfake[j] = dft[j] - sum_drt / r.m;
}

}  // namespace

double softplus(double x) {
  // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Standard: return "standard";
    case Variant::RaS: return "ras";
    case Variant::RaLS: return "rals";
    case Variant::RaHinge: return "rahinge";
  }
  return "?";
}

Variant variant_from_name(const std::string& s) {
  if (s == "standard") return Variant::Standard;
  if (s == "ras") return Variant::RaS;
  if (s == "rals") return Variant::RaLS;
  if (s == "rahinge") return Variant::RaHinge;
  throw std::invalid_argument("unknown loss variant '" + s + "' (standard|ras|rals|rahinge)");
}

AdvLoss standard_gan_losses(const CriticOutputs& crit, bool with_grads) {
  check_nonempty(crit);
  const double n = double(crit.c_real.size()), m = double(crit.c_fake.size());
  AdvLoss out;
  for (double x : crit.c_real) out.d_adv += softplus(-x) / n;
  for (double x : crit.c_fake) {
    out.d_adv += softplus(x) / m;
    out.g_adv += softplus(-x) / m;
  }
  if (with_grads) {
    out.d_grad_real.resize(crit.c_real.size());
    out.d_grad_fake.resize(crit.c_fake.size());
    out.g_grad_real.assign(crit.c_real.size(), 0.0);
    out.g_grad_fake.resize(crit.c_fake.size());
    for (size_t i = 0; i < crit.c_real.size(); ++i)
      out.d_grad_real[i] = -sigmoid(-crit.c_real[i]) / n;
    for (size_t j = 0; j < crit.c_fake.size(); ++j) {
      out.d_grad_fake[j] = sigmoid(crit.c_fake[j]) / m;
      out.g_grad_fake[j] = -sigmoid(-crit.c_fake[j]) / m;
    }
  }
  return out;
}

AdvLoss ras_losses(const CriticOutputs& crit, bool with_grads) {
  check_nonempty(crit);
  const Relativistic r = relativize(crit);
  AdvLoss out;
  for (double x : r.rt) {
    out.d_adv += softplus(-x) / r.n;
    out.g_adv += softplus(x) / r.n;
  }
  for (double x : r.ft) {
    out.d_adv += softplus(x) / r.m;
    out.g_adv += softplus(-x) / r.m;
  }
  if (with_grads) {
    std::vector<double> drt(r.rt.size()), dft(r.ft.size());
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = -sigmoid(-r.rt[i]) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = sigmoid(r.ft[j]) / r.m;
    chain_relativistic(r, drt, dft, out.d_grad_real, out.d_grad_fake);
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = sigmoid(r.rt[i]) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = -sigmoid(-r.ft[j]) / r.m;
    chain_relativistic(r, drt, dft, out.g_grad_real, out.g_grad_fake);
  }
  return out;
}

AdvLoss rals_losses(const CriticOutputs& crit, bool with_grads) {
  check_nonempty(crit);
  const Relativistic r = relativize(crit);
  AdvLoss out;
  for (double x : r.rt) {
    out.d_adv += (x - 1) * (x - 1) / r.n;
    out.g_adv += (x + 1) * (x + 1) / r.n;
  }
  for (double x : r.ft) {
    out.d_adv += (x + 1) * (x + 1) / r.m;
    out.g_adv += (x - 1) * (x - 1) / r.m;
  }
  if (with_grads) {
    std::vector<double> drt(r.rt.size()), dft(r.ft.size());
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = 2 * (r.rt[i] - 1) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = 2 * (r.ft[j] + 1) / r.m;
    chain_relativistic(r, drt, dft, out.d_grad_real, out.d_grad_fake);
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = 2 * (r.rt[i] + 1) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = 2 * (r.ft[j] - 1) / r.m;
    chain_relativistic(r, drt, dft, out.g_grad_real, out.g_grad_fake);
  }
  return out;
}

AdvLoss rahinge_losses(const CriticOutputs& crit, bool with_grads) {
  check_nonempty(crit);
  const Relativistic r = relativize(crit);
  AdvLoss out;
  for (double x : r.rt) {
    out.d_adv += std::max(0.0, 1 - x) / r.n;
    out.g_adv += std::max(0.0, 1 + x) / r.n;
  }
  for (double x : r.ft) {
    out.d_adv += std::max(0.0, 1 + x) / r.m;
    out.g_adv += std::max(0.0, 1 - x) / r.m;
  }
  if (with_grads) {
    std::vector<double> drt(r.rt.size()), dft(r.ft.size());
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = (1 - r.rt[i] > 0 ? -1.0 : 0.0) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = (1 + r.ft[j] > 0 ? 1.0 : 0.0) / r.m;
    chain_relativistic(r, drt, dft, out.d_grad_real, out.d_grad_fake);
    for (size_t i = 0; i < r.rt.size(); ++i) drt[i] = (1 + r.rt[i] > 0 ? 1.0 : 0.0) / r.n;
    for (size_t j = 0; j < r.ft.size(); ++j) dft[j] = (1 - r.ft[j] > 0 ? -1.0 : 0.0) / r.m;
    chain_relativistic(r, drt, dft, out.g_grad_real, out.g_grad_fake);
  }
  return out;
}

AdvLoss adversarial_losses(Variant v, const CriticOutputs& crit, bool with_grads) {
  switch (v) {
    case Variant::Standard: return standard_gan_losses(crit, with_grads);
    case Variant::RaS: return ras_losses(crit, with_grads);
    case Variant::RaLS: return rals_losses(crit, with_grads);
    case Variant::RaHinge: return rahinge_losses(crit, with_grads);
  }
  throw std::logic_error("adversarial_losses: bad variant");
}

DeshuffleLoss deshuffle_loss(const PermLogits& logits, const std::vector<int>& labels,
                             bool with_grads) {
  if (logits.n <= 0 || logits.k <= 0 || int64_t(logits.v.size()) != logits.n * logits.k)
    throw std::invalid_argument("deshuffle_loss: malformed logits");
  if (int64_t(labels.size()) != logits.n)
    throw std::invalid_argument("deshuffle_loss: labels length mismatch");
  check_finite(logits.v, "perm logits");
  for (int l : labels)
    if (l < 0 || int64_t(l) >= logits.k)
      throw std::invalid_argument("deshuffle_loss: label " + std::to_string(l) + " out of range");

  DeshuffleLoss out;
  if (with_grads) {
    out.grad.n = logits.n;
    out.grad.k = logits.k;
    out.grad.v.assign(logits.v.size(), 0.0);
  }
  const double invn = 1.0 / double(logits.n);
  for (int64_t i = 0; i < logits.n; ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 1; j < logits.k; ++j) mx = std::max(mx, logits.at(i, j));
    double se = 0;
    for (int64_t j = 0; j < logits.k; ++j) se += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(se);
    out.value += (lse - logits.at(i, labels[size_t(i)])) * invn;
    if (with_grads) {
      for (int64_t j = 0; j < logits.k; ++j) {
        double g = std::exp(logits.at(i, j) - lse) * invn;
        if (j == labels[size_t(i)]) g -= invn;
        out.grad.v[size_t(i * logits.k + j)] = g;
      }
    }
  }
  return out;
}

LossTerms combine(double d_adv, double g_adv, double v_disc, double v_gen,
                  double alpha, double beta) {
  for (double x : {d_adv, g_adv, v_disc, v_gen, alpha, beta})
    if (!std::isfinite(x)) throw std::invalid_argument("combine: non-finite input");
  if (alpha < 0 || beta < 0) throw std::invalid_argument("combine: alpha and beta must be >= 0");
  LossTerms t;
  t.d_adv = d_adv;
  t.g_adv = g_adv;
  t.v_disc = v_disc;
  t.v_gen = v_gen;
  t.d_total = d_adv + alpha * v_disc;
  t.g_total = g_adv + beta * v_gen;
  return t;
}

}  // namespace puzzlegan::losses
