#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "puzzlegan/losses.hpp"
#include "puzzlegan/rng.hpp"

using namespace puzzlegan;
using losses::CriticOutputs;
using losses::PermLogits;
using losses::Variant;

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Local softplus, independent of the implementation under test.
double sp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

CriticOutputs random_crit(Rng& rng, size_t n, size_t m, double scale = 2.0) {
  CriticOutputs c;
  for (size_t i = 0; i < n; ++i) c.c_real.push_back(rng.normal() * scale);
  for (size_t j = 0; j < m; ++j) c.c_fake.push_back(rng.normal() * scale);
  return c;
}

// Central finite differences of (d_adv, g_adv) w.r.t. every score, compared
// against the analytic gradients, relative error <= 1e-4.
void check_adv_gradients(Variant v, const CriticOutputs& c) {
  const double eps = 1e-4;
  const losses::AdvLoss base = losses::adversarial_losses(v, c, true);
  auto value = [&](const CriticOutputs& cc) {
    const losses::AdvLoss l = losses::adversarial_losses(v, cc, false);
    return std::pair<double, double>{l.d_adv, l.g_adv};
  };
  auto check_one = [&](bool real_side, size_t i, double an_d, double an_g) {
    CriticOutputs cp = c, cm = c;
    auto& vp = real_side ? cp.c_real : cp.c_fake;
    auto& vm = real_side ? cm.c_real : cm.c_fake;
    vp[i] += eps;
    vm[i] -= eps;
    const auto [dp, gp] = value(cp);
    const auto [dm, gm] = value(cm);
    const double fd_d = (dp - dm) / (2 * eps), fd_g = (gp - gm) / (2 * eps);
    CHECK(std::abs(fd_d - an_d) <= 1e-4 * std::max(1.0, std::abs(fd_d)));
    CHECK(std::abs(fd_g - an_g) <= 1e-4 * std::max(1.0, std::abs(fd_g)));
  };
  for (size_t i = 0; i < c.c_real.size(); ++i)
    check_one(true, i, base.d_grad_real[i], base.g_grad_real[i]);
  for (size_t j = 0; j < c.c_fake.size(); ++j)
    check_one(false, j, base.d_grad_fake[j], base.g_grad_fake[j]);
}

// RaHinge is only piecewise smooth; resample until no score sits near a kink.
bool near_hinge_kink(const CriticOutputs& c) {
  double mr = 0, mf = 0;
  for (double x : c.c_real) mr += x / double(c.c_real.size());
  for (double x : c.c_fake) mf += x / double(c.c_fake.size());
  for (double x : c.c_real)
    if (std::abs(std::abs(x - mf) - 1.0) < 0.05) return true;
  for (double x : c.c_fake)
    if (std::abs(std::abs(x - mr) - 1.0) < 0.05) return true;
  return false;
}

}  // namespace

TEST_CASE("standard losses on the documented cases") {
  const auto zero = losses::standard_gan_losses({{0, 0}, {0, 0, 0}});
  CHECK(zero.d_adv == doctest::Approx(2 * kLn2).epsilon(1e-12));
  CHECK(zero.g_adv == doctest::Approx(kLn2).epsilon(1e-12));

  const auto sat = losses::standard_gan_losses({{40.0}, {-40.0}});
  CHECK(sat.d_adv <= 1e-12);
  CHECK(sat.d_adv >= 0.0);

  // softplus(40) = 40 up to ~4e-18: the linear tail, no overflow.
  const auto tail = losses::standard_gan_losses({{-40.0}, {0.0}});
  CHECK(tail.d_adv == doctest::Approx(40.0 + kLn2).epsilon(1e-12));
}

TEST_CASE("relativistic average sigmoid losses") {
  SUBCASE("equal constant batches give 2 ln 2 for both players") {
    for (double c : {0.0, 3.5, -120.0}) {
      const auto l = losses::ras_losses({{c, c, c}, {c, c}});
      CHECK(l.d_adv == doctest::Approx(2 * kLn2).epsilon(1e-12));
      CHECK(l.g_adv == doctest::Approx(2 * kLn2).epsilon(1e-12));
    }
  }
  SUBCASE("documented asymmetric case, oracle-evaluated") {
    const auto l = losses::ras_losses({{2, 0}, {0, -2}});
    // rt = [3, 1], ft = [-1, -3]; d_adv = mean sp(-rt) + mean sp(ft).
    const double expect = 0.5 * (sp(-3) + sp(-1)) + 0.5 * (sp(-1) + sp(-3));
    CHECK(expect == doctest::Approx(0.3618490390919648).epsilon(1e-14));
    CHECK(l.d_adv == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("relativistic average least-squares losses") {
  const auto ideal = losses::rals_losses({{1.0}, {0.0}});  // rt=1, ft=-1
  CHECK(ideal.d_adv == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ideal.g_adv == doctest::Approx(8.0).epsilon(1e-12));

  const auto flat = losses::rals_losses({{0.7, 0.7}, {0.7}});
  CHECK(flat.d_adv == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(flat.g_adv == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("relativistic average hinge losses") {
  const auto wide = losses::rahinge_losses({{2.0}, {0.0}});  // rt=2, ft=-2
  CHECK(wide.d_adv == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wide.g_adv == doctest::Approx(6.0).epsilon(1e-12));

  const auto flat = losses::rahinge_losses({{-1.0}, {-1.0}});
  CHECK(flat.d_adv == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(flat.g_adv == doctest::Approx(2.0).epsilon(1e-12));

  const auto mixed = losses::rahinge_losses({{1.0, -1.0}, {0.0, 0.0}});
  CHECK(mixed.d_adv == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("relativistic variants are invariant to a shared score shift") {
  Rng rng = Rng::seeded(41);
  for (Variant v : {Variant::RaS, Variant::RaLS, Variant::RaHinge}) {
    for (int rep = 0; rep < 25; ++rep) {
      const CriticOutputs c = random_crit(rng, 5, 7);
      const double k = rng.normal() * 50.0;
      CriticOutputs shifted = c;
      for (double& x : shifted.c_real) x += k;
      for (double& x : shifted.c_fake) x += k;
      const auto a = losses::adversarial_losses(v, c, false);
      const auto b = losses::adversarial_losses(v, shifted, false);
      CHECK(b.d_adv == doctest::Approx(a.d_adv).epsilon(1e-6));
      CHECK(b.g_adv == doctest::Approx(a.g_adv).epsilon(1e-6));
    }
  }
}

TEST_CASE("losses are invariant to batch reordering") {
  Rng rng = Rng::seeded(42);
  std::mt19937 shold(7);
  for (Variant v : {Variant::Standard, Variant::RaS, Variant::RaLS, Variant::RaHinge}) {
    const CriticOutputs c = random_crit(rng, 6, 6);
    CriticOutputs p = c;
    std::shuffle(p.c_real.begin(), p.c_real.end(), shold);
    std::shuffle(p.c_fake.begin(), p.c_fake.end(), shold);
    const auto a = losses::adversarial_losses(v, c, false);
    const auto b = losses::adversarial_losses(v, p, false);
    CHECK(b.d_adv == doctest::Approx(a.d_adv).epsilon(1e-12));
    CHECK(b.g_adv == doctest::Approx(a.g_adv).epsilon(1e-12));
  }
}

TEST_CASE("non-negativity where the losses guarantee it") {
  Rng rng = Rng::seeded(43);
  for (int rep = 0; rep < 50; ++rep) {
    const CriticOutputs c = random_crit(rng, 4, 4, 3.0);
    CHECK(losses::rals_losses(c, false).d_adv >= 0.0);
    CHECK(losses::rahinge_losses(c, false).d_adv >= 0.0);
    CHECK(losses::standard_gan_losses(c, false).d_adv >= 0.0);
  }
}

TEST_CASE("adversarial gradients match central finite differences") {
  Rng rng = Rng::seeded(44);
  for (Variant v : {Variant::Standard, Variant::RaS, Variant::RaLS, Variant::RaHinge}) {
    CAPTURE(losses::variant_name(v));
    for (int rep = 0; rep < 5; ++rep) {
      CriticOutputs c = random_crit(rng, 1 + size_t(rng.uniform_int(7)),
                                    1 + size_t(rng.uniform_int(7)));
      while (v == Variant::RaHinge && near_hinge_kink(c))
        c = random_crit(rng, c.c_real.size(), c.c_fake.size());
      check_adv_gradients(v, c);
    }
  }
}

TEST_CASE("deshuffle loss on the documented cases") {
  SUBCASE("confident correct prediction is ~zero loss") {
    PermLogits l{1, 30, std::vector<double>(30, 0.0)};
    l.v[7] = 1000.0;
    CHECK(losses::deshuffle_loss(l, {7}, false).value <= 1e-9);
  }
  SUBCASE("uniform prediction over 30 classes is ln 30") {
    PermLogits l{2, 30, std::vector<double>(60, 0.0)};
    const double v = losses::deshuffle_loss(l, {0, 29}, false).value;
    CHECK(v == doctest::Approx(std::log(30.0)).epsilon(1e-12));
    CHECK(v == doctest::Approx(3.4012).epsilon(1e-4));
  }
  SUBCASE("two-class case with softmax p=3/4 at the label") {
    PermLogits l{1, 2, {0.0, std::log(3.0)}};
    CHECK(losses::deshuffle_loss(l, {1}, false).value ==
          doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
  }
}

TEST_CASE("deshuffle loss gradient matches finite differences and is non-negative") {
  Rng rng = Rng::seeded(45);
  for (int rep = 0; rep < 5; ++rep) {
    const int64_t n = 1 + rng.uniform_int(6), k = 2 + rng.uniform_int(29);
    PermLogits l{n, k, {}};
    l.v.resize(size_t(n * k));
    for (auto& x : l.v) x = rng.normal() * 3.0;
    std::vector<int> labels;
    for (int64_t i = 0; i < n; ++i) labels.push_back(int(rng.uniform_int(k)));
    const auto base = losses::deshuffle_loss(l, labels, true);
    CHECK(base.value >= 0.0);
    const double eps = 1e-4;
    for (size_t i = 0; i < l.v.size(); ++i) {
      PermLogits lp = l, lm = l;
      lp.v[i] += eps;
      lm.v[i] -= eps;
      const double fd = (losses::deshuffle_loss(lp, labels, false).value -
                         losses::deshuffle_loss(lm, labels, false).value) /
                        (2 * eps);
      CHECK(std::abs(fd - base.grad.v[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("combine applies the weighted totals") {
  const auto t = losses::combine(1.0, 2.0, 3.0, 5.0, 1.0, 0.2);
  CHECK(t.d_total == 4.0);
  CHECK(t.g_total == 3.0);

  const auto ablate = losses::combine(0.7, 0.9, 123.0, 456.0, 0.0, 0.0);
  CHECK(ablate.d_total == 0.7);  // bitwise: baseline recovered
  CHECK(ablate.g_total == 0.9);

  const auto scaled = losses::combine(0.0, 0.0, 3.0, 5.0, 1.0, 0.2);
  CHECK(scaled.d_total == 3.0);
  CHECK(scaled.g_total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("validation rejects bad inputs") {
  CHECK_THROWS_AS(losses::ras_losses({{}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(losses::standard_gan_losses({{1.0}, {}}), std::invalid_argument);
  CHECK_THROWS_AS(
      losses::rals_losses({{std::numeric_limits<double>::quiet_NaN()}, {0.0}}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      losses::ras_losses({{1.0}, {std::numeric_limits<double>::infinity()}}),
      std::invalid_argument);

  PermLogits l{1, 3, {0, 0, 0}};
  CHECK_THROWS_AS(losses::deshuffle_loss(l, {3}), std::invalid_argument);
  CHECK_THROWS_AS(losses::deshuffle_loss(l, {-1}), std::invalid_argument);
  CHECK_THROWS_AS(losses::deshuffle_loss(l, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(losses::combine(1, 1, 1, 1, -0.5, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(
      losses::combine(std::numeric_limits<double>::quiet_NaN(), 0, 0, 0, 1, 0.2),
      std::invalid_argument);

  CHECK_THROWS_AS(losses::variant_from_name("wgan"), std::invalid_argument);
  CHECK(losses::variant_from_name("rals") == Variant::RaLS);
}
