#include "puzzlegan/evalfid.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "puzzlegan/dataio.hpp"
#include "puzzlegan/models.hpp"
#include "puzzlegan/rng.hpp"

namespace puzzlegan::evalfid {

namespace {
constexpr double kNegEigTol = 1e-6;

void check_stats(const GaussianStats& s, const char* what) {
  const int64_t d = int64_t(s.mu.size());
  if (s.sigma.rows != d || s.sigma.cols != d)
    throw std::invalid_argument(std::string(what) + ": mu/sigma dimension mismatch");
  for (double v : s.mu)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite mu");
  for (double v : s.sigma.a)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite sigma");
}
}  // namespace

FeatureSet FeatureExtractor::extract_set(const Tensor& batch) const {
  FeatureSet f;
  f.n = batch.size(0);
  f.d = dim();
  f.extractor_id = id();
  f.data.resize(size_t(f.n * f.d));
  extract(batch, f.data.data());
  return f;
}

ToyExtractor::ToyExtractor(uint64_t seed, int64_t dim, int pool)
    : seed_(seed), dim_(dim), pool_(pool) {
  if (dim < 1 || pool < 1) throw std::invalid_argument("ToyExtractor: bad dim/pool");
  id_ = "toy-rp" + std::to_string(dim) + "-p" + std::to_string(pool) + "-s" + std::to_string(seed);
  const int64_t in = 3 * int64_t(pool) * pool;
  Rng rng = Rng::seeded(Rng::mix(seed, 0x7031));
  w_.resize(size_t(dim * in));
  const double scale = 1.0 / std::sqrt(double(in));
  for (auto& x : w_) x = rng.normal() * scale;
}

void ToyExtractor::extract(const Tensor& batch, double* out) const {
  if (batch.dim() != 4 || batch.size(1) != 3)
    throw std::invalid_argument("ToyExtractor: expected Nx3xHxW batch");
  const int64_t N = batch.size(0), H = batch.size(2), W = batch.size(3);
  const int p = int(std::min<int64_t>({pool_, H, W}));
  const int64_t in = 3 * int64_t(pool_) * pool_;
  std::vector<double> pooled(size_t(in), 0.0);
  for (int64_t n = 0; n < N; ++n) {
    std::fill(pooled.begin(), pooled.end(), 0.0);
    for (int64_t c = 0; c < 3; ++c)
      for (int by = 0; by < p; ++by) {
        const int64_t y0 = by * H / p, y1 = (by + 1) * H / p;
        for (int bx = 0; bx < p; ++bx) {
          const int64_t x0 = bx * W / p, x1 = (bx + 1) * W / p;
          double s = 0;
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x) s += double(batch(n, c, y, x));
          pooled[size_t((c * pool_ + by) * pool_ + bx)] = s / double((y1 - y0) * (x1 - x0));
        }
      }
    for (int64_t j = 0; j < dim_; ++j) {
      double acc = 0;
      const double* wr = &w_[size_t(j * in)];
      for (int64_t i = 0; i < in; ++i) acc += wr[i] * pooled[size_t(i)];
      out[n * dim_ + j] = std::tanh(acc);
    }
  }
}

SubprocessExtractor::SubprocessExtractor(std::string command, int64_t dim)
    : command_(std::move(command)), dim_(dim) {
  if (dim < 1) throw std::invalid_argument("SubprocessExtractor: dim must be >= 1");
}

void SubprocessExtractor::extract(const Tensor& batch, double* out) const {
  if (batch.dim() != 4) throw std::invalid_argument("SubprocessExtractor: expected 4-D batch");
  int inpipe[2], outpipe[2];
  if (pipe(inpipe) != 0 || pipe(outpipe) != 0)
    throw std::runtime_error("SubprocessExtractor: pipe() failed");
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("SubprocessExtractor: fork() failed");
  if (pid == 0) {
    dup2(inpipe[0], STDIN_FILENO);
    dup2(outpipe[1], STDOUT_FILENO);
    close(inpipe[0]);
    close(inpipe[1]);
    close(outpipe[0]);
    close(outpipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), (char*)nullptr);
    _exit(127);
  }
  close(inpipe[0]);
  close(outpipe[1]);

  auto write_all = [](int fd, const void* buf, size_t len) {
    const char* p = static_cast<const char*>(buf);
    while (len > 0) {
      const ssize_t w = write(fd, p, len);
      if (w <= 0) throw std::runtime_error("SubprocessExtractor: write to child failed");
      p += w;
      len -= size_t(w);
    }
  };
  auto read_all = [](int fd, void* buf, size_t len) {
    char* p = static_cast<char*>(buf);
    while (len > 0) {
      const ssize_t r = read(fd, p, len);
      if (r < 0) throw std::runtime_error("SubprocessExtractor: read from child failed");
      if (r == 0) throw std::runtime_error("SubprocessExtractor: child closed output early");
      p += r;
      len -= size_t(r);
    }
  };

  int status = -1;
  try {
    const uint32_t hdr[4] = {uint32_t(batch.size(0)), uint32_t(batch.size(1)),
                             uint32_t(batch.size(2)), uint32_t(batch.size(3))};
    write_all(inpipe[1], hdr, sizeof(hdr));
    write_all(inpipe[1], batch.data(), size_t(batch.numel()) * sizeof(float));
    close(inpipe[1]);

    uint32_t d = 0;
    read_all(outpipe[0], &d, sizeof(d));
    if (int64_t(d) != dim_)
      throw std::runtime_error("SubprocessExtractor: child declared dim " + std::to_string(d) +
                               ", expected " + std::to_string(dim_));
    std::vector<float> feats(size_t(batch.size(0) * dim_), 0.0f);
    read_all(outpipe[0], feats.data(), feats.size() * sizeof(float));
    close(outpipe[0]);
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw std::runtime_error("SubprocessExtractor: child exited with failure");
    for (size_t i = 0; i < feats.size(); ++i) out[i] = double(feats[i]);
  } catch (...) {
    close(outpipe[0]);
    waitpid(pid, &status, 0);
    throw;
  }
}

GaussianStats fit_gaussian(const FeatureSet& f) {
  if (f.n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
  if (f.d < 1 || int64_t(f.data.size()) != f.n * f.d)
    throw std::invalid_argument("fit_gaussian: malformed feature set");
  GaussianStats s;
  s.mu.assign(size_t(f.d), 0.0);
  for (int64_t i = 0; i < f.n; ++i)
    for (int64_t j = 0; j < f.d; ++j) s.mu[size_t(j)] += f.at(i, j);
  for (double& m : s.mu) m /= double(f.n);

  s.sigma = linalg::Mat(f.d, f.d);
  for (int64_t i = 0; i < f.n; ++i)
    for (int64_t a = 0; a < f.d; ++a) {
      const double da = f.at(i, a) - s.mu[size_t(a)];
      for (int64_t b = a; b < f.d; ++b)
        s.sigma(a, b) += da * (f.at(i, b) - s.mu[size_t(b)]);
    }
  const double norm = 1.0 / double(f.n - 1);
  for (int64_t a = 0; a < f.d; ++a)
    for (int64_t b = a; b < f.d; ++b) {
      s.sigma(a, b) *= norm;
      s.sigma(b, a) = s.sigma(a, b);
    }
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check_stats(a, "frechet_distance lhs");
  check_stats(b, "frechet_distance rhs");
  if (a.mu.size() != b.mu.size())
    throw std::invalid_argument("frechet_distance: dimension mismatch");

  linalg::Mat s1 = a.sigma, s2 = b.sigma;
  linalg::symmetrize(s1);
  linalg::symmetrize(s2);

  double dmu2 = 0;
  for (size_t i = 0; i < a.mu.size(); ++i) {
    const double d = a.mu[i] - b.mu[i];
    dmu2 += d * d;
  }

  const linalg::Mat root1 = linalg::sqrt_psd(s1, kNegEigTol);
  linalg::Mat prod = linalg::matmul(linalg::matmul(root1, s2), root1);
  linalg::symmetrize(prod);

  linalg::Mat V;
  std::vector<double> lam;
  linalg::symmetric_eigen(prod, V, lam);
  double tr_sqrt = 0;
  for (double l : lam) {
    if (l < -kNegEigTol)
      throw std::runtime_error("frechet_distance: product eigenvalue " + std::to_string(l) +
                               " below -1e-6; covariance is numerically unusable");
    tr_sqrt += std::sqrt(std::max(l, 0.0));
  }

  const double d = dmu2 + linalg::trace(s1) + linalg::trace(s2) - 2.0 * tr_sqrt;
  if (!std::isfinite(d))
    throw std::runtime_error("frechet_distance: non-finite result (dmu2=" + std::to_string(dmu2) +
                             ", tr_sqrt=" + std::to_string(tr_sqrt) + ")");
  return std::max(d, 0.0);
}

double frechet_from_features(const FeatureSet& a, const FeatureSet& b) {
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

double evaluate(const models::Generator& gen, const dataio::Dataset& data,
                const FeatureExtractor& extractor, int64_t n_samples, uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("evaluate: n_samples must be >= 2");
  const int64_t d = extractor.dim();
  FeatureSet fake, real;
  fake.n = real.n = n_samples;
  fake.d = real.d = d;
  fake.extractor_id = real.extractor_id = extractor.id();
  fake.data.resize(size_t(n_samples * d));
  real.data.resize(size_t(n_samples * d));

  Rng z_rng = Rng::seeded(Rng::mix(seed, 0xE7A1));
  const int64_t chunk = 64;
  const int s = data.image_size();
  for (int64_t off = 0; off < n_samples; off += chunk) {
    const int64_t n = std::min(chunk, n_samples - off);
    Tensor z({n, gen.spec.z_dim});
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = float(z_rng.normal());
    nn::Tape tape;
    const Tensor imgs = gen.forward(z, tape, false);
    extractor.extract(imgs, fake.data.data() + off * d);

    Tensor reals({n, 3, s, s});
    for (int64_t i = 0; i < n; ++i) {
      const Tensor t = data.sample((off + i) % data.size());
      std::copy_n(t.data(), t.numel(), reals.data() + i * t.numel());
    }
    extractor.extract(reals, real.data.data() + off * d);
  }
  return frechet_from_features(fake, real);
}

}  // namespace puzzlegan::evalfid
