#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "puzzlegan/dataio.hpp"
#include "puzzlegan/evalfid.hpp"
#include "puzzlegan/models.hpp"
#include "puzzlegan/rng.hpp"

using namespace puzzlegan;
using evalfid::FeatureSet;
using evalfid::GaussianStats;

namespace {

FeatureSet make_features(int64_t n, int64_t d, Rng& rng, double mean_shift = 0.0) {
  FeatureSet f;
  f.n = n;
  f.d = d;
  f.extractor_id = "test";
  f.data.resize(size_t(n * d));
  for (auto& x : f.data) x = rng.normal() + mean_shift;
  return f;
}

GaussianStats diag_stats(const std::vector<double>& mu, const std::vector<double>& var) {
  GaussianStats s;
  s.mu = mu;
  s.sigma = linalg::Mat(int64_t(mu.size()), int64_t(mu.size()));
  for (size_t i = 0; i < var.size(); ++i) s.sigma(int64_t(i), int64_t(i)) = var[i];
  return s;
}

GaussianStats random_psd_stats(int64_t d, Rng& rng) {
  GaussianStats s;
  s.mu.resize(size_t(d));
  for (auto& m : s.mu) m = rng.normal();
  linalg::Mat a(d, d);
  for (auto& x : a.a) x = rng.normal();
  s.sigma = linalg::matmul(linalg::transpose(a), a);
  return s;
}

}  // namespace

TEST_CASE("fit_gaussian on degenerate and tiny sets") {
  SUBCASE("constant features give mu = v, sigma = 0") {
    FeatureSet f{3, 2, {1.5, -2.0, 1.5, -2.0, 1.5, -2.0}, "t"};
    const GaussianStats s = evalfid::fit_gaussian(f);
    CHECK(s.mu == std::vector<double>{1.5, -2.0});
    for (double v : s.sigma.a) CHECK(v == 0.0);
  }
  SUBCASE("two 1-D samples use the unbiased covariance") {
    FeatureSet f{2, 1, {0.0, 2.0}, "t"};
    const GaussianStats s = evalfid::fit_gaussian(f);
    CHECK(s.mu[0] == 1.0);
    CHECK(s.sigma(0, 0) == 2.0);
  }
  SUBCASE("fewer than two samples is an error") {
    FeatureSet f{1, 3, {0, 0, 0}, "t"};
    CHECK_THROWS_AS(evalfid::fit_gaussian(f), std::invalid_argument);
  }
}

TEST_CASE("fit_gaussian matches a naive double-loop covariance") {
  Rng rng = Rng::seeded(51);
  const FeatureSet f = make_features(100, 4, rng);
  const GaussianStats s = evalfid::fit_gaussian(f);
  for (int64_t a = 0; a < 4; ++a)
    for (int64_t b = 0; b < 4; ++b) {
      double ma = 0, mb = 0;
      for (int64_t i = 0; i < f.n; ++i) {
        ma += f.at(i, a) / double(f.n);
        mb += f.at(i, b) / double(f.n);
      }
      double cov = 0;
      for (int64_t i = 0; i < f.n; ++i) cov += (f.at(i, a) - ma) * (f.at(i, b) - mb);
      cov /= double(f.n - 1);
      CHECK(std::abs(s.sigma(a, b) - cov) <= 1e-10);
    }
}

TEST_CASE("frechet distance closed-form cases") {
  SUBCASE("identical Gaussians") {
    Rng rng = Rng::seeded(52);
    const GaussianStats s = random_psd_stats(5, rng);
    CHECK(evalfid::frechet_distance(s, s) <= 1e-8);
  }
  SUBCASE("identity covariances reduce to the mean gap") {
    const GaussianStats a = diag_stats({0, 0}, {1, 1});
    const GaussianStats b = diag_stats({2, 0}, {1, 1});
    CHECK(evalfid::frechet_distance(a, b) == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("scalar case (0,1) vs (1,4)") {
    const GaussianStats a = diag_stats({0}, {1});
    const GaussianStats b = diag_stats({1}, {4});
    CHECK(evalfid::frechet_distance(a, b) == doctest::Approx(2.0).epsilon(1e-10));
  }
}

TEST_CASE("diagonal covariances match the scalar-sum formula") {
  Rng rng = Rng::seeded(53);
  for (int rep = 0; rep < 100; ++rep) {
    const int64_t d = 1 + rng.uniform_int(6);
    std::vector<double> mu1(size_t(d), 0.0), mu2(size_t(d), 0.0), v1(size_t(d), 0.0), v2(size_t(d), 0.0);
    for (int64_t i = 0; i < d; ++i) {
      mu1[size_t(i)] = rng.normal();
      mu2[size_t(i)] = rng.normal();
      v1[size_t(i)] = 0.1 + 3.0 * rng.next_double();
      v2[size_t(i)] = 0.1 + 3.0 * rng.next_double();
    }
    double expect = 0;
    for (int64_t i = 0; i < d; ++i) {
      const double dm = mu1[size_t(i)] - mu2[size_t(i)];
      const double ds = std::sqrt(v1[size_t(i)]) - std::sqrt(v2[size_t(i)]);
      expect += dm * dm + ds * ds;
    }
    const double got = evalfid::frechet_distance(diag_stats(mu1, v1), diag_stats(mu2, v2));
    CHECK(std::abs(got - expect) <= 1e-8);
  }
}

TEST_CASE("frechet distance is symmetric") {
  Rng rng = Rng::seeded(54);
  for (int rep = 0; rep < 20; ++rep) {
    const GaussianStats a = random_psd_stats(4, rng), b = random_psd_stats(4, rng);
    CHECK(std::abs(evalfid::frechet_distance(a, b) - evalfid::frechet_distance(b, a)) <= 1e-8);
  }
}

TEST_CASE("distance grows with the mean gap at fixed covariance") {
  Rng rng = Rng::seeded(55);
  const GaussianStats base = random_psd_stats(3, rng);
  double prev = -1;
  for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    GaussianStats moved = base;
    for (auto& m : moved.mu) m += shift;
    const double d = evalfid::frechet_distance(base, moved);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("input validation") {
  Rng rng = Rng::seeded(56);
  const GaussianStats a = random_psd_stats(3, rng), b = random_psd_stats(4, rng);
  CHECK_THROWS_AS((void)evalfid::frechet_distance(a, b), std::invalid_argument);
  GaussianStats bad = a;
  bad.mu[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)evalfid::frechet_distance(bad, a), std::invalid_argument);
}

TEST_CASE("toy extractor is deterministic and seed-sensitive") {
  Rng rng = Rng::seeded(57);
  Tensor batch({3, 3, 16, 16});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.next_float() * 2 - 1;
  const evalfid::ToyExtractor e7(7, 16, 8), e7b(7, 16, 8), e8(8, 16, 8);
  const FeatureSet f1 = e7.extract_set(batch);
  const FeatureSet f2 = e7b.extract_set(batch);
  const FeatureSet f3 = e8.extract_set(batch);
  CHECK(f1.data == f2.data);
  CHECK(f1.data != f3.data);
  CHECK(f1.extractor_id == "toy-rp16-p8-s7");
}

TEST_CASE("same-distribution halves are closer than a shifted distribution") {
  auto data = dataio::synthetic_structured(2000, 16, 9);
  const evalfid::ToyExtractor ex(7, 16, 8);
  auto extract_range = [&](int64_t lo, int64_t hi, float shift) {
    Tensor batch({hi - lo, 3, 16, 16});
    for (int64_t i = lo; i < hi; ++i) {
      const Tensor t = data->sample(i);
      for (int64_t j = 0; j < t.numel(); ++j)
        batch[(i - lo) * t.numel() + j] = std::clamp(t[j] + shift, -1.0f, 1.0f);
    }
    return ex.extract_set(batch);
  };
  const FeatureSet a = extract_range(0, 1000, 0.0f);
  const FeatureSet b = extract_range(1000, 2000, 0.0f);
  const FeatureSet shifted = extract_range(1000, 2000, 0.6f);
  const double d_same = evalfid::frechet_from_features(a, b);
  const double d_shift = evalfid::frechet_from_features(a, shifted);
  CHECK(d_same < 0.05);
  CHECK(d_shift > 4 * d_same);
  CHECK(evalfid::frechet_from_features(a, a) <= 1e-6);
}

TEST_CASE("evaluate is deterministic and positive for an untrained generator") {
  auto data = dataio::synthetic_structured(256, 16, 3);
  Rng init = Rng::seeded(99);
  const models::Generator gen = models::build_generator({16, 3, 16, 2}, init);
  const evalfid::ToyExtractor ex(7, 8, 8);
  const double s1 = evalfid::evaluate(gen, *data, ex, 256, 11);
  const double s2 = evalfid::evaluate(gen, *data, ex, 256, 11);
  CHECK(s1 == s2);
  CHECK(s1 > 0.0);
  CHECK(std::isfinite(s1));
  CHECK_THROWS_AS((void)evalfid::evaluate(gen, *data, ex, 1, 11), std::invalid_argument);
}

#ifdef PIPE_EXTRACTOR_PATH
TEST_CASE("subprocess extractor adapter speaks the pipe protocol") {
  Rng rng = Rng::seeded(58);
  Tensor batch({4, 3, 6, 6});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.next_float();
  const evalfid::SubprocessExtractor ex(std::string(PIPE_EXTRACTOR_PATH) + " 5", 5);
  const FeatureSet f = ex.extract_set(batch);
  REQUIRE(f.n == 4);
  REQUIRE(f.d == 5);
  for (int64_t n = 0; n < 4; ++n) {
    for (int64_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (int64_t p = 0; p < 36; ++p) mean += double(batch[(n * 3 + c) * 36 + p]) / 36.0;
      CHECK(f.at(n, c) == doctest::Approx(mean).epsilon(1e-5));
    }
    CHECK(f.at(n, 3) == 0.0);
    CHECK(f.at(n, 4) == 0.0);
  }

  // Declared dimension must match what the child reports.
  const evalfid::SubprocessExtractor wrong(std::string(PIPE_EXTRACTOR_PATH) + " 5", 6);
  std::vector<double> out(size_t(4 * 6));
  CHECK_THROWS_AS(wrong.extract(batch, out.data()), std::runtime_error);

  const evalfid::SubprocessExtractor failing("false", 5);
  CHECK_THROWS_AS(failing.extract(batch, out.data()), std::runtime_error);
}
#endif
