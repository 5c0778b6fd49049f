// 500 iterations at 48x48 for every loss variant, reduced width: the loop
// must stay finite throughout. Registered with a long timeout; this is the
// slowest unit suite.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "puzzlegan/trainer.hpp"

using namespace puzzlegan;

TEST_CASE("500 iterations at 48x48 stay finite for all four variants") {
  for (losses::Variant v : {losses::Variant::Standard, losses::Variant::RaS,
                            losses::Variant::RaLS, losses::Variant::RaHinge}) {
    CAPTURE(losses::variant_name(v));
    trainer::TrainConfig cfg;
    cfg.loss_variant = v;
    cfg.batch_size = 8;
    cfg.total_iterations = 500;
    cfg.seed = 1;
    cfg.z_dim = 32;
    cfg.image_size = 48;
    cfg.base_width_g = 4;
    cfg.base_width_d = 4;
    auto data = dataio::synthetic_structured(256, 48, 1);
    int64_t steps = 0;
    trainer::ArtifactSink sink{{}, [&](const trainer::StepReport& r) {
                                 ++steps;
                                 REQUIRE(std::isfinite(r.terms.d_total));
                                 REQUIRE(std::isfinite(r.terms.g_total));
                               }};
    CHECK_NOTHROW((void)trainer::train(cfg, *data, sink));
    CHECK(steps == 500);
  }
}
