#include "puzzlegan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace puzzlegan::linalg {

Mat Mat::identity(int64_t n) {
  Mat m(n, n);
  for (int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw std::invalid_argument("matmul: dim mismatch");
  Mat z(x.rows, y.cols);
  for (int64_t i = 0; i < x.rows; ++i)
    for (int64_t k = 0; k < x.cols; ++k) {
      const double v = x(i, k);
      if (v == 0.0) continue;
      for (int64_t j = 0; j < y.cols; ++j) z(i, j) += v * y(k, j);
    }
  return z;
}

Mat transpose(const Mat& x) {
  Mat z(x.cols, x.rows);
  for (int64_t i = 0; i < x.rows; ++i)
    for (int64_t j = 0; j < x.cols; ++j) z(j, i) = x(i, j);
  return z;
}

void symmetrize(Mat& x) {
  if (x.rows != x.cols) throw std::invalid_argument("symmetrize: not square");
  for (int64_t i = 0; i < x.rows; ++i)
    for (int64_t j = i + 1; j < x.cols; ++j) {
      const double v = 0.5 * (x(i, j) + x(j, i));
      x(i, j) = v;
      x(j, i) = v;
    }
}

double trace(const Mat& x) {
  double t = 0;
  for (int64_t i = 0; i < std::min(x.rows, x.cols); ++i) t += x(i, i);
  return t;
}

void symmetric_eigen(const Mat& A, Mat& V, std::vector<double>& lam) {
  if (A.rows != A.cols) throw std::invalid_argument("symmetric_eigen: not square");
  const int64_t n = A.rows;
  Mat S = A;
  V = Mat::identity(n);

  auto offdiag = [&]() {
    double s = 0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) s += S(i, j) * S(i, j);
    return std::sqrt(2.0 * s);
  };

  double scale = 0;
  for (int64_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(S(i, i)));
  scale = std::max(scale, offdiag());
  const double tol = 1e-14 * std::max(scale, 1.0);

  for (int sweep = 0; sweep < 100 && offdiag() > tol; ++sweep) {
    for (int64_t p = 0; p < n - 1; ++p)
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = S(p, q);
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double app = S(p, p), aqq = S(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t i = 0; i < n; ++i) {
          const double sip = S(i, p), siq = S(i, q);
          S(i, p) = c * sip - s * siq;
          S(i, q) = s * sip + c * siq;
        }
        for (int64_t j = 0; j < n; ++j) {
          const double spj = S(p, j), sqj = S(q, j);
          S(p, j) = c * spj - s * sqj;
          S(q, j) = s * spj + c * sqj;
        }
        for (int64_t i = 0; i < n; ++i) {
          const double vip = V(i, p), viq = V(i, q);
          V(i, p) = c * vip - s * viq;
          V(i, q) = s * vip + c * viq;
        }
      }
  }

  lam.resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) lam[size_t(i)] = S(i, i);

  // Sort ascending, carrying eigenvector columns along.
  std::vector<int64_t> idx(size_t(n), 0);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int64_t a, int64_t b) { return lam[size_t(a)] < lam[size_t(b)]; });
  std::vector<double> lam2(size_t(n), 0.0);
  Mat V2(n, n);
  for (int64_t c = 0; c < n; ++c) {
    lam2[size_t(c)] = lam[size_t(idx[size_t(c)])];
    for (int64_t r = 0; r < n; ++r) V2(r, c) = V(r, idx[size_t(c)]);
  }
  lam = std::move(lam2);
  V = std::move(V2);
}

Mat sqrt_psd(const Mat& A, double neg_tol) {
  Mat V;
  std::vector<double> lam;
  symmetric_eigen(A, V, lam);
  const int64_t n = A.rows;
  Mat D(n, n);
  for (int64_t i = 0; i < n; ++i) {
    double l = lam[size_t(i)];
    if (l < -neg_tol)
      throw std::runtime_error("sqrt_psd: eigenvalue " + std::to_string(l) +
                               " below tolerance " + std::to_string(-neg_tol));
    D(i, i) = std::sqrt(std::max(l, 0.0));
  }
  return matmul(matmul(V, D), transpose(V));
}

}  // namespace puzzlegan::linalg
