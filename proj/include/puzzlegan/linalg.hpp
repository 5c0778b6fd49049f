#pragma once

#include <cstdint>
#include <vector>

namespace puzzlegan::linalg {

// Small dense double-precision matrix, row-major. Sized for feature-space
// covariance work (D up to a few hundred), not general numerics.
struct Mat {
  int64_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), a(size_t(r * c), 0.0) {}

  double& operator()(int64_t i, int64_t j) { return a[size_t(i * cols + j)]; }
  double operator()(int64_t i, int64_t j) const { return a[size_t(i * cols + j)]; }

  static Mat identity(int64_t n);
};

Mat matmul(const Mat& x, const Mat& y);
Mat transpose(const Mat& x);
void symmetrize(Mat& x);  // x <- (x + x^T)/2
double trace(const Mat& x);

// Cyclic Jacobi eigendecomposition of a symmetric matrix: A = V diag(lam) V^T
// with V's columns orthonormal. Eigenvalues come back sorted ascending.
void symmetric_eigen(const Mat& A, Mat& V, std::vector<double>& lam);

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-neg_tol, 0) clamp to zero; anything below -neg_tol throws.
Mat sqrt_psd(const Mat& A, double neg_tol);

}  // namespace puzzlegan::linalg
