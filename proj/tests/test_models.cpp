#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "puzzlegan/models.hpp"

using namespace puzzlegan;

namespace {

Tensor randn(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal());
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("spatial plans decompose supported sizes") {
  CHECK(models::spatial_plan(128) == std::pair<int, int>{4, 5});
  CHECK(models::spatial_plan(64) == std::pair<int, int>{4, 4});
  CHECK(models::spatial_plan(32) == std::pair<int, int>{4, 3});
  CHECK(models::spatial_plan(48) == std::pair<int, int>{3, 4});
  CHECK(models::spatial_plan(96) == std::pair<int, int>{3, 5});
  CHECK_THROWS_AS(models::spatial_plan(9), std::invalid_argument);
  CHECK_THROWS_AS(models::spatial_plan(5), std::invalid_argument);
  CHECK_THROWS_AS(models::spatial_plan(17), std::invalid_argument);
}

TEST_CASE("generator shape contract across sizes, outputs in [-1,1]") {
  for (int size : {32, 48, 64, 128}) {
    CAPTURE(size);
    Rng init = Rng::seeded(uint64_t(size));
    const models::Generator g = models::build_generator({64, 3, size, 4}, init);
    Rng rng = Rng::seeded(1);
    const Tensor z = randn({2, 64}, rng);
    nn::Tape tape;
    const Tensor y = g.forward(z, tape, true);
    REQUIRE(y.shape() == std::vector<int64_t>{2, 3, size, size});
    for (int64_t i = 0; i < y.numel(); ++i) {
      REQUIRE(y[i] >= -1.0f);
      REQUIRE(y[i] <= 1.0f);
    }
  }
}

TEST_CASE("generator at the documented full-size batch") {
  Rng init = Rng::seeded(2);
  const models::Generator g = models::build_generator({128, 3, 128, 4}, init);
  Rng rng = Rng::seeded(3);
  const Tensor z = randn({32, 128}, rng);
  nn::Tape tape;
  const Tensor y = g.forward(z, tape, false);
  CHECK(y.shape() == std::vector<int64_t>{32, 3, 128, 128});
}

TEST_CASE("generator inference is deterministic") {
  Rng init = Rng::seeded(4);
  const models::Generator g = models::build_generator({16, 3, 32, 4}, init);
  Rng rng = Rng::seeded(5);
  const Tensor z = randn({3, 16}, rng);
  nn::Tape t1, t2;
  CHECK(bitwise_equal(g.forward(z, t1, false), g.forward(z, t2, false)));
}

TEST_CASE("discriminator emits N scores and NxK logits from one trunk pass") {
  Rng init = Rng::seeded(6);
  const models::Discriminator d = models::build_discriminator({3, 48, 4, 30}, init);
  Rng rng = Rng::seeded(7);
  const Tensor x = randn({5, 3, 48, 48}, rng);
  models::DiscTape rf_tape, perm_tape;
  const models::DiscriminatorOutputs out = d.forward(x, rf_tape, perm_tape, true);
  CHECK(out.rf_score.shape() == std::vector<int64_t>{5});
  CHECK(out.perm_logits.shape() == std::vector<int64_t>{5, 30});

  // The combined pass equals the two single-head passes.
  models::DiscTape t1, t2;
  CHECK(bitwise_equal(out.rf_score, d.forward_rf(x, t1, true)));
  CHECK(bitwise_equal(out.perm_logits, d.forward_perm(x, t2, true)));
}

TEST_CASE("head parameter sets are disjoint under backprop") {
  Rng init = Rng::seeded(8);
  const models::Discriminator d = models::build_discriminator({3, 32, 4, 12}, init);
  Rng rng = Rng::seeded(9);
  const Tensor x = randn({3, 3, 32, 32}, rng);

  d.zero_grads();
  models::DiscTape tape;
  const Tensor rf = d.forward_rf(x, tape, true);
  Tensor gy(rf.shape());
  gy.fill(1.0f);
  (void)d.backward_rf(gy, tape, true);
  for (const Tensor* g : d.perm_head.grads())
    for (int64_t i = 0; i < g->numel(); ++i) REQUIRE((*g)[i] == 0.0f);

  d.zero_grads();
  models::DiscTape tape2;
  const Tensor pl = d.forward_perm(x, tape2, true);
  Tensor gy2(pl.shape());
  gy2.fill(1.0f);
  (void)d.backward_perm(gy2, tape2, true);
  for (const Tensor* g : d.rf_head.grads())
    for (int64_t i = 0; i < g->numel(); ++i) REQUIRE((*g)[i] == 0.0f);
  // ...while the shared trunk did receive gradient.
  double trunk_norm = 0;
  for (const Tensor* g : d.trunk.grads())
    for (int64_t i = 0; i < g->numel(); ++i) trunk_norm += double((*g)[i]) * double((*g)[i]);
  CHECK(trunk_norm > 0.0);
}

TEST_CASE("trunk weights are shared by both heads") {
  Rng init = Rng::seeded(10);
  models::Discriminator d = models::build_discriminator({3, 32, 4, 8}, init);
  Rng rng = Rng::seeded(11);
  const Tensor x = randn({2, 3, 32, 32}, rng);
  models::DiscTape t1, t2;
  const models::DiscriminatorOutputs before = d.forward(x, t1, t2, false);

  Tensor* w = d.trunk.params().front();
  (*w)[0] += 0.5f;  // mutate through the trunk view
  models::DiscTape t3, t4;
  const models::DiscriminatorOutputs after = d.forward(x, t3, t4, false);
  CHECK_FALSE(bitwise_equal(before.rf_score, after.rf_score));
  CHECK_FALSE(bitwise_equal(before.perm_logits, after.perm_logits));
}

TEST_CASE("perm logits respond to trunk parameters (finite-difference probe)") {
  Rng init = Rng::seeded(12);
  models::Discriminator d = models::build_discriminator({3, 16 * 2, 2, 6}, init);
  Rng rng = Rng::seeded(13);
  const Tensor x = randn({2, 3, 32, 32}, rng);
  Tensor* w = d.trunk.params().front();
  models::DiscTape t1;
  const Tensor base = d.forward_perm(x, t1, false);
  const float eps = 1e-2f;
  (*w)[3] += eps;
  models::DiscTape t2;
  const Tensor moved = d.forward_perm(x, t2, false);
  double diff = 0;
  for (int64_t i = 0; i < base.numel(); ++i) diff += std::abs(double(moved[i]) - double(base[i]));
  CHECK(diff > 0.0);
}

TEST_CASE("count_parameters matches the layer-table arithmetic") {
  // Generator out_size=32 (s0=4, 3 stages), base=8, z=128:
  //   linear 128 -> 64*16 (+bias), bn(64), convT 64->32, bn(32), convT 32->16,
  //   bn(16), convT 16->3. k=4 kernels.
  Rng init = Rng::seeded(14);
  const models::Generator g = models::build_generator({128, 3, 32, 8}, init);
  const int64_t linear = 128 * 1024 + 1024;
  const int64_t bns = 2 * 64 + 2 * 32 + 2 * 16;
  const int64_t convts = (64 * 32 * 16 + 32) + (32 * 16 * 16 + 16) + (16 * 3 * 16 + 3);
  CHECK(models::count_parameters(g) == linear + bns + convts);
  CHECK(models::count_parameters(g) == 174099);

  Rng init2 = Rng::seeded(14);
  const models::Generator g2 = models::build_generator({128, 3, 32, 16}, init2);
  CHECK(models::count_parameters(g2) > models::count_parameters(g));

  // Discriminator perm head adds trunk_out*K*s0^2 + K parameters over rf-only.
  Rng init3 = Rng::seeded(15);
  const models::Discriminator d = models::build_discriminator({3, 32, 8, 30}, init3);
  const int64_t trunk_out = 8 << 2;  // 3 stages: 8, 16, 32
  const int64_t expected_perm = trunk_out * 30 * 4 * 4 + 30;
  CHECK(nn::count_parameters(d.perm_head) == expected_perm);
  CHECK(models::count_parameters(d) ==
        nn::count_parameters(d.trunk) + nn::count_parameters(d.rf_head) + expected_perm);
}

TEST_CASE("invalid specs are rejected") {
  Rng rng = Rng::seeded(16);
  CHECK_THROWS_AS(models::build_generator({128, 3, 9, 8}, rng), std::invalid_argument);
  CHECK_THROWS_AS(models::build_generator({128, 3, 128, 1}, rng), std::invalid_argument);
  CHECK_THROWS_AS(models::build_generator({0, 3, 32, 8}, rng), std::invalid_argument);
  CHECK_THROWS_AS(models::build_discriminator({3, 32, 8, 1}, rng), std::invalid_argument);
  CHECK_THROWS_AS(models::build_discriminator({1, 32, 8, 30}, rng), std::invalid_argument);
}
