#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "puzzlegan/linalg.hpp"
#include "puzzlegan/tensor.hpp"

namespace puzzlegan::evalfid {

// N x D feature matrix plus the id of the extractor that produced it.
struct FeatureSet {
  int64_t n = 0, d = 0;
  std::vector<double> data;  // row-major
  std::string extractor_id;

  double at(int64_t i, int64_t j) const { return data[size_t(i * d + j)]; }
};

struct GaussianStats {
  std::vector<double> mu;
  linalg::Mat sigma;  // symmetric by construction
};

// Maps an image batch (N x C x S x S, values nominally in [-1,1]) to N x D
// features. Implementations must be deterministic in inference mode.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int64_t dim() const = 0;
  virtual void extract(const Tensor& batch, double* out) const = 0;

  FeatureSet extract_set(const Tensor& batch) const;
};

// Hermetic stand-in for a pretrained embedding network: channel-wise adaptive
// average pooling to pool x pool, then a fixed seeded random projection and
// tanh. Same seed, same features, forever.
class ToyExtractor final : public FeatureExtractor {
 public:
  ToyExtractor(uint64_t seed, int64_t dim = 32, int pool = 12);
  std::string id() const override { return id_; }
  int64_t dim() const override { return dim_; }
  void extract(const Tensor& batch, double* out) const override;

 private:
  uint64_t seed_;
  int64_t dim_;
  int pool_;
  std::string id_;
  std::vector<double> w_;  // dim x (3*pool*pool)
};

// Adapter slot for an external pretrained network run as a subprocess. One
// process per extract() call; protocol (all little-endian binary):
//   stdin:  u32 n, c, h, w  then n*c*h*w float32 pixels
//   stdout: u32 d           then n*d     float32 features
// The child must consume all input before emitting output.
class SubprocessExtractor final : public FeatureExtractor {
 public:
  SubprocessExtractor(std::string command, int64_t dim);
  std::string id() const override { return "cmd:" + command_; }
  int64_t dim() const override { return dim_; }
  void extract(const Tensor& batch, double* out) const override;

 private:
  std::string command_;
  int64_t dim_;
};

// mu = column mean, sigma = unbiased sample covariance, symmetrized.
GaussianStats fit_gaussian(const FeatureSet& f);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), the trace computed through
// the symmetrized product sqrt(S1) S2 sqrt(S1); negative eigenvalues within
// -1e-6 clamp to zero, below that it is a numerical error. Result clamps at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

double frechet_from_features(const FeatureSet& a, const FeatureSet& b);

}  // namespace puzzlegan::evalfid

namespace puzzlegan::models {
struct Generator;
}
namespace puzzlegan::dataio {
class Dataset;
}

namespace puzzlegan::evalfid {

// Generates n_samples images from seeded z draws (inference mode), extracts
// features for them and for n_samples real samples (cyclic index order over
// the dataset), and returns the Fréchet distance of the two Gaussian fits.
// Deterministic per (generator params, extractor, seed, n_samples).
double evaluate(const models::Generator& gen, const dataio::Dataset& data,
                const FeatureExtractor& extractor, int64_t n_samples, uint64_t seed);

}  // namespace puzzlegan::evalfid
