#include "puzzlegan/kernels.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace puzzlegan::kernels {

namespace {
std::atomic<ExecMode> g_mode{ExecMode::Parallel};

void check4(const Tensor& t, const char* what) {
  if (t.dim() != 4) throw std::invalid_argument(std::string(what) + ": expected 4-D tensor, got " + t.shape_str());
}
}  // namespace

ExecMode default_mode() { return g_mode.load(std::memory_order_relaxed); }
void set_default_mode(ExecMode m) { g_mode.store(m, std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// Serial reference. Plain loop nests, one accumulator per output element.
// ---------------------------------------------------------------------------
namespace ref {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check4(x, "conv2d_forward");
  const int64_t N = x.size(0), Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Co = w.size(0), Kh = w.size(2), Kw = w.size(3);
  if (w.size(1) != Ci) throw std::invalid_argument("conv2d_forward: channel mismatch");
  const int64_t Ho = conv_out_size(H, Kh, stride, pad), Wo = conv_out_size(W, Kw, stride, pad);
  Tensor y({N, Co, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          float acc = b[co];
          for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t ky = 0; ky < Kh; ++ky) {
              const int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int64_t kx = 0; kx < Kw; ++kx) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= W) continue;
                acc += x(n, ci, iy, ix) * w(co, ci, ky, kx);
              }
            }
          y(n, co, oy, ox) = acc;
        }
  return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = w.size(1), Kh = w.size(2), Kw = w.size(3);
  Tensor gx({N, Ci, h, wd});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t iy = 0; iy < h; ++iy)
        for (int64_t ix = 0; ix < wd; ++ix) {
          float acc = 0.0f;
          for (int64_t co = 0; co < Co; ++co)
            for (int64_t ky = 0; ky < Kh; ++ky) {
              const int64_t t = iy + pad - ky;
              if (t < 0 || t % stride) continue;
              const int64_t oy = t / stride;
              if (oy >= Ho) continue;
              for (int64_t kx = 0; kx < Kw; ++kx) {
                const int64_t u = ix + pad - kx;
                if (u < 0 || u % stride) continue;
                const int64_t ox = u / stride;
                if (ox >= Wo) continue;
                acc += gy(n, co, oy, ox) * w(co, ci, ky, kx);
              }
            }
          gx(n, ci, iy, ix) = acc;
        }
  return gx;
}

void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Kh = gw.size(2), Kw = gw.size(3);
  for (int64_t co = 0; co < Co; ++co) {
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t ky = 0; ky < Kh; ++ky)
        for (int64_t kx = 0; kx < Kw; ++kx) {
          float acc = 0.0f;
          for (int64_t n = 0; n < N; ++n)
            for (int64_t oy = 0; oy < Ho; ++oy) {
              const int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int64_t ox = 0; ox < Wo; ++ox) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= W) continue;
                acc += gy(n, co, oy, ox) * x(n, ci, iy, ix);
              }
            }
          gw(co, ci, ky, kx) += acc;
        }
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) acc += gy(n, co, oy, ox);
    gb[co] += acc;
  }
}

Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad) {
  check4(x, "convt2d_forward");
  const int64_t N = x.size(0), Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Co = wt.size(1), Kh = wt.size(2), Kw = wt.size(3);
  if (wt.size(0) != Ci) throw std::invalid_argument("convt2d_forward: channel mismatch");
  const int64_t Ho = convt_out_size(H, Kh, stride, pad), Wo = convt_out_size(W, Kw, stride, pad);
  Tensor y({N, Co, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          float acc = b[co];
          for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t ky = 0; ky < Kh; ++ky) {
              const int64_t t = oy + pad - ky;
              if (t < 0 || t % stride) continue;
              const int64_t iy = t / stride;
              if (iy >= H) continue;
              for (int64_t kx = 0; kx < Kw; ++kx) {
                const int64_t u = ox + pad - kx;
                if (u < 0 || u % stride) continue;
                const int64_t ix = u / stride;
                if (ix >= W) continue;
                acc += x(n, ci, iy, ix) * wt(ci, co, ky, kx);
              }
            }
          y(n, co, oy, ox) = acc;
        }
  return y;
}

Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = wt.size(0), Kh = wt.size(2), Kw = wt.size(3);
  Tensor gx({N, Ci, h, wd});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t iy = 0; iy < h; ++iy)
        for (int64_t ix = 0; ix < wd; ++ix) {
          float acc = 0.0f;
          for (int64_t co = 0; co < Co; ++co)
            for (int64_t ky = 0; ky < Kh; ++ky) {
              const int64_t oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= Ho) continue;
              for (int64_t kx = 0; kx < Kw; ++kx) {
                const int64_t ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= Wo) continue;
                acc += gy(n, co, oy, ox) * wt(ci, co, ky, kx);
              }
            }
          gx(n, ci, iy, ix) = acc;
        }
  return gx;
}

void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Kh = gw.size(2), Kw = gw.size(3);
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t ky = 0; ky < Kh; ++ky)
        for (int64_t kx = 0; kx < Kw; ++kx) {
          float acc = 0.0f;
          for (int64_t n = 0; n < N; ++n)
            for (int64_t iy = 0; iy < H; ++iy) {
              const int64_t oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= Ho) continue;
              for (int64_t ix = 0; ix < W; ++ix) {
                const int64_t ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= Wo) continue;
                acc += x(n, ci, iy, ix) * gy(n, co, oy, ox);
              }
            }
          gw(ci, co, ky, kx) += acc;
        }
  for (int64_t co = 0; co < Co; ++co) {
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) acc += gy(n, co, oy, ox);
    gb[co] += acc;
  }
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t N = x.size(0), I = x.size(1), O = w.size(0);
  if (w.size(1) != I) throw std::invalid_argument("linear_forward: dim mismatch");
  Tensor y({N, O});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      float acc = b[o];
      for (int64_t i = 0; i < I; ++i) acc += x(n, i) * w(o, i);
      y(n, o) = acc;
    }
  return y;
}

Tensor linear_backward_input(const Tensor& gy, const Tensor& w) {
  const int64_t N = gy.size(0), O = gy.size(1), I = w.size(1);
  Tensor gx({N, I});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < I; ++i) {
      float acc = 0.0f;
      for (int64_t o = 0; o < O; ++o) acc += gy(n, o) * w(o, i);
      gx(n, i) = acc;
    }
  return gx;
}

void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb) {
  const int64_t N = gy.size(0), O = gy.size(1), I = x.size(1);
  for (int64_t o = 0; o < O; ++o) {
    for (int64_t i = 0; i < I; ++i) {
      float acc = 0.0f;
      for (int64_t n = 0; n < N; ++n) acc += gy(n, o) * x(n, i);
      gw(o, i) += acc;
    }
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n) acc += gy(n, o);
    gb[o] += acc;
  }
}

void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const double m = double(N * H * W);
  for (int64_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) s += double(x(n, c, y, xx));
    const double mu = s / m;
    double v = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double d = double(x(n, c, y, xx)) - mu;
          v += d * d;
        }
    mean[c] = float(mu);
    invstd[c] = float(1.0 / std::sqrt(v / m + eps));
  }
}

Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor y({N, C, H, W});
  for (int64_t c = 0; c < C; ++c) {
    const float mu = mean[c], is = invstd[c], g = gamma[c], bb = beta[c];
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx)
          y(n, c, yy, xx) = g * ((x(n, c, yy, xx) - mu) * is) + bb;
  }
  return y;
}

Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const double m = double(N * H * W);
  Tensor gx({N, C, H, W});
  for (int64_t c = 0; c < C; ++c) {
    const double mu = mean[c], is = invstd[c], g = gamma[c];
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double gyv = gy(n, c, yy, xx);
          const double xhat = (double(x(n, c, yy, xx)) - mu) * is;
          sum_gy += gyv;
          sum_gy_xhat += gyv * xhat;
        }
    dbeta[c] += float(sum_gy);
    dgamma[c] += float(sum_gy_xhat);
    const double k = g * is / m;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double gyv = gy(n, c, yy, xx);
          const double xhat = (double(x(n, c, yy, xx)) - mu) * is;
          gx(n, c, yy, xx) = float(k * (m * gyv - sum_gy - xhat * sum_gy_xhat));
        }
  }
  return gx;
}

Tensor leaky_relu_forward(const Tensor& x, float slope) {
  Tensor y = Tensor::zeros_like(x);
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope) {
  Tensor gx = Tensor::zeros_like(x);
  for (int64_t i = 0; i < x.numel(); ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
  return gx;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Tensor tanh_backward(const Tensor& gy, const Tensor& y) {
  Tensor gx = Tensor::zeros_like(y);
  for (int64_t i = 0; i < y.numel(); ++i) gx[i] = gy[i] * (1.0f - y[i] * y[i]);
  return gx;
}

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double gi = g[i];
    const double mi = beta1 * double(m[i]) + (1.0 - beta1) * gi;
    const double vi = beta2 * double(v[i]) + (1.0 - beta2) * gi * gi;
    m[i] = float(mi);
    v[i] = float(vi);
    p[i] = float(double(p[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
  }
}

void axpy(Tensor& y, const Tensor& x, float a) {
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += a * x[i];
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP kernels. Loops are restructured for speed (hoisted row pointers,
// branch-free valid ranges instead of per-element bounds checks), but every
// output element accumulates its terms in exactly the reference order
// (ci -> ky -> kx ascending / n -> oy -> ox ascending), so results match the
// reference bitwise at any thread count.
// ---------------------------------------------------------------------------
namespace omp {

namespace {
// Valid k range for "idx*stride - pad + k in [0, limit)".
inline void k_range(int64_t idx, int stride, int pad, int64_t k, int64_t limit,
                    int64_t& k0, int64_t& k1) {
  const int64_t base = idx * stride - pad;
  k0 = base < 0 ? -base : 0;
  k1 = std::min(k, limit - base);
}

// Integer division rounding toward -inf / +inf (C++ '/' truncates toward 0).
inline int64_t floor_div(int64_t a, int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}
inline int64_t ceil_div(int64_t a, int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Gather-side range for transposed addressing: k in [0, kmax) with
// k = (u mod s) (mod s), (u - k)/s in [0, limit). Returns k_lo/k_hi inclusive
// (empty when k_lo > k_hi) plus the source index of k_lo; the source index
// then decrements as k steps by s.
inline void phase_range(int64_t u, int stride, int64_t kmax, int64_t limit,
                        int64_t& k_lo, int64_t& k_hi, int64_t& src0) {
  const int64_t ph = u % stride;  // u >= 0 at every call site
  k_lo = std::max<int64_t>(ph, u - stride * (limit - 1));
  // Largest k <= kmax-1 in the same residue class, also <= u (source >= 0).
  k_hi = std::min(ph + stride * floor_div(kmax - 1 - ph, stride), u);
  src0 = (u - k_lo) / stride;
}
}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check4(x, "conv2d_forward");
  const int64_t N = x.size(0), Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Co = w.size(0), Kh = w.size(2), Kw = w.size(3);
  if (w.size(1) != Ci) throw std::invalid_argument("conv2d_forward: channel mismatch");
  const int64_t Ho = conv_out_size(H, Kh, stride, pad), Wo = conv_out_size(W, Kw, stride, pad);
  Tensor y({N, Co, Ho, Wo});
  const float* xd = x.data();
  const float* wd = w.data();
  float* yd = y.data();
  // Per-kx output range with in-bounds sampled input; row-invariant.
  std::vector<std::array<int64_t, 2>> kxtab(size_t(Kw), {0, 0});
  for (int64_t kx = 0; kx < Kw; ++kx)
    kxtab[size_t(kx)] = {std::max<int64_t>(0, ceil_div(pad - kx, stride)),
                         std::min(Wo, floor_div(W - 1 - kx + pad, stride) + 1)};
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy) {
        float* yrow = yd + ((n * Co + co) * Ho + oy) * Wo;
        for (int64_t ox = 0; ox < Wo; ++ox) yrow[ox] = b[co];
        int64_t ky0, ky1;
        k_range(oy, stride, pad, Kh, H, ky0, ky1);
        for (int64_t ci = 0; ci < Ci; ++ci)
          for (int64_t ky = ky0; ky < ky1; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            const float* xrow = xd + ((n * Ci + ci) * H + iy) * W;
            const float* wrow = wd + ((co * Ci + ci) * Kh + ky) * Kw;
            for (int64_t kx = 0; kx < Kw; ++kx) {
              const float wv = wrow[kx];
              const int64_t ibase = kx - pad;
              for (int64_t ox = kxtab[size_t(kx)][0]; ox < kxtab[size_t(kx)][1]; ++ox)
                yrow[ox] += xrow[ox * stride + ibase] * wv;
            }
          }
      }
  return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd_, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = w.size(1), Kh = w.size(2), Kw = w.size(3);
  Tensor gx({N, Ci, h, wd_});
  const float* gyd = gy.data();
  const float* wd = w.data();
  float* gxd = gx.data();
  // ix = stride*ox + kx - pad must stay inside the row; row-invariant per kx.
  std::vector<std::array<int64_t, 2>> kxtab(size_t(Kw), {0, 0});
  for (int64_t kx = 0; kx < Kw; ++kx)
    kxtab[size_t(kx)] = {std::max<int64_t>(0, ceil_div(pad - kx, stride)),
                         std::min(Wo, floor_div(wd_ - 1 - kx + pad, stride) + 1)};
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t iy = 0; iy < h; ++iy) {
        float* grow = gxd + ((n * Ci + ci) * h + iy) * wd_;
        int64_t ky_lo, ky_hi, oy0;
        phase_range(iy + pad, stride, Kh, Ho, ky_lo, ky_hi, oy0);
        for (int64_t co = 0; co < Co; ++co) {
          const float* wbase = wd + (co * Ci + ci) * Kh * Kw;
          int64_t oy = oy0;
          for (int64_t ky = ky_lo; ky <= ky_hi; ky += stride, --oy) {
            const float* gyrow = gyd + ((n * Co + co) * Ho + oy) * Wo;
            const float* wrow = wbase + ky * Kw;
            for (int64_t kx = 0; kx < Kw; ++kx) {
              const float wv = wrow[kx];
              const int64_t ibase = kx - pad;
              for (int64_t ox = kxtab[size_t(kx)][0]; ox < kxtab[size_t(kx)][1]; ++ox)
                grow[ox * stride + ibase] += gyrow[ox] * wv;
            }
          }
        }
      }
  return gx;
}

void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Kh = gw.size(2), Kw = gw.size(3);
  const float* gyd = gy.data();
  const float* xd = x.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t ky = 0; ky < Kh; ++ky)
        for (int64_t kx = 0; kx < Kw; ++kx) {
          // Output ranges whose sampled input index stays in bounds.
          const int64_t oy0 = std::max<int64_t>(0, ceil_div(pad - ky, stride));
          const int64_t oy1 = std::min(Ho, floor_div(H - 1 - ky + pad, stride) + 1);
          const int64_t ox0 = std::max<int64_t>(0, ceil_div(pad - kx, stride));
          const int64_t ox1 = std::min(Wo, floor_div(W - 1 - kx + pad, stride) + 1);
          const int64_t ibase = kx - pad;
          float acc = 0.0f;
          for (int64_t n = 0; n < N; ++n)
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t iy = oy * stride - pad + ky;
              const float* gyrow = gyd + ((n * Co + co) * Ho + oy) * Wo;
              const float* xrow = xd + ((n * Ci + ci) * H + iy) * W;
              for (int64_t ox = ox0; ox < ox1; ++ox)
                acc += gyrow[ox] * xrow[ox * stride + ibase];
            }
          gw(co, ci, ky, kx) += acc;
        }
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < Co; ++co) {
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n) {
      const float* gyrow = gyd + (n * Co + co) * Ho * Wo;
      for (int64_t i = 0; i < Ho * Wo; ++i) acc += gyrow[i];
    }
    gb[co] += acc;
  }
}

Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad) {
  check4(x, "convt2d_forward");
  const int64_t N = x.size(0), Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Co = wt.size(1), Kh = wt.size(2), Kw = wt.size(3);
  if (wt.size(0) != Ci) throw std::invalid_argument("convt2d_forward: channel mismatch");
  const int64_t Ho = convt_out_size(H, Kh, stride, pad), Wo = convt_out_size(W, Kw, stride, pad);
  Tensor y({N, Co, Ho, Wo});
  const float* xd = x.data();
  const float* wd = wt.data();
  float* yd = y.data();
  // ox = stride*ix + kx - pad must stay inside the row; row-invariant per kx.
  std::vector<std::array<int64_t, 2>> kxtab(size_t(Kw), {0, 0});
  for (int64_t kx = 0; kx < Kw; ++kx)
    kxtab[size_t(kx)] = {std::max<int64_t>(0, ceil_div(pad - kx, stride)),
                         std::min(W, floor_div(Wo - 1 - kx + pad, stride) + 1)};
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy) {
        float* yrow = yd + ((n * Co + co) * Ho + oy) * Wo;
        for (int64_t ox = 0; ox < Wo; ++ox) yrow[ox] = b[co];
        int64_t ky_lo, ky_hi, iy0;
        phase_range(oy + pad, stride, Kh, H, ky_lo, ky_hi, iy0);
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const float* wbase = wd + (ci * Co + co) * Kh * Kw;
          int64_t iy = iy0;
          for (int64_t ky = ky_lo; ky <= ky_hi; ky += stride, --iy) {
            const float* xrow = xd + ((n * Ci + ci) * H + iy) * W;
            const float* wrow = wbase + ky * Kw;
            for (int64_t kx = 0; kx < Kw; ++kx) {
              const float wv = wrow[kx];
              const int64_t obase = kx - pad;
              for (int64_t ix = kxtab[size_t(kx)][0]; ix < kxtab[size_t(kx)][1]; ++ix)
                yrow[ix * stride + obase] += xrow[ix] * wv;
            }
          }
        }
      }
  return y;
}

Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd_, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = wt.size(0), Kh = wt.size(2), Kw = wt.size(3);
  Tensor gx({N, Ci, h, wd_});
  const float* gyd = gy.data();
  const float* wd = wt.data();
  float* gxd = gx.data();
  // ox = stride*ix + kx - pad must stay inside the row; row-invariant per kx.
  std::vector<std::array<int64_t, 2>> kxtab(size_t(Kw), {0, 0});
  for (int64_t kx = 0; kx < Kw; ++kx)
    kxtab[size_t(kx)] = {std::max<int64_t>(0, ceil_div(pad - kx, stride)),
                         std::min(wd_, floor_div(Wo - 1 - kx + pad, stride) + 1)};
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t iy = 0; iy < h; ++iy) {
        float* grow = gxd + ((n * Ci + ci) * h + iy) * wd_;
        int64_t ky0, ky1;
        k_range(iy, stride, pad, Kh, Ho, ky0, ky1);
        for (int64_t co = 0; co < Co; ++co) {
          const float* wbase = wd + (ci * Co + co) * Kh * Kw;
          for (int64_t ky = ky0; ky < ky1; ++ky) {
            const int64_t oy = iy * stride - pad + ky;
            const float* gyrow = gyd + ((n * Co + co) * Ho + oy) * Wo;
            const float* wrow = wbase + ky * Kw;
            for (int64_t kx = 0; kx < Kw; ++kx) {
              const float wv = wrow[kx];
              const int64_t obase = kx - pad;
              for (int64_t ix = kxtab[size_t(kx)][0]; ix < kxtab[size_t(kx)][1]; ++ix)
                grow[ix] += gyrow[ix * stride + obase] * wv;
            }
          }
        }
      }
  return gx;
}

void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  const int64_t N = gy.size(0), Co = gy.size(1), Ho = gy.size(2), Wo = gy.size(3);
  const int64_t Ci = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Kh = gw.size(2), Kw = gw.size(3);
  const float* gyd = gy.data();
  const float* xd = x.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t ky = 0; ky < Kh; ++ky)
        for (int64_t kx = 0; kx < Kw; ++kx) {
          // Input ranges whose produced output index stays in bounds.
          const int64_t iy0 = std::max<int64_t>(0, ceil_div(pad - ky, stride));
          const int64_t iy1 = std::min(H, floor_div(Ho - 1 - ky + pad, stride) + 1);
          const int64_t ix0 = std::max<int64_t>(0, ceil_div(pad - kx, stride));
          const int64_t ix1 = std::min(W, floor_div(Wo - 1 - kx + pad, stride) + 1);
          const int64_t obase = kx - pad;
          float acc = 0.0f;
          for (int64_t n = 0; n < N; ++n)
            for (int64_t iy = iy0; iy < iy1; ++iy) {
              const int64_t oy = iy * stride - pad + ky;
              const float* xrow = xd + ((n * Ci + ci) * H + iy) * W;
              const float* gyrow = gyd + ((n * Co + co) * Ho + oy) * Wo;
              for (int64_t ix = ix0; ix < ix1; ++ix)
                acc += xrow[ix] * gyrow[ix * stride + obase];
            }
          gw(ci, co, ky, kx) += acc;
        }
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < Co; ++co) {
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n) {
      const float* gyrow = gyd + (n * Co + co) * Ho * Wo;
      for (int64_t i = 0; i < Ho * Wo; ++i) acc += gyrow[i];
    }
    gb[co] += acc;
  }
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t N = x.size(0), I = x.size(1), O = w.size(0);
  if (w.size(1) != I) throw std::invalid_argument("linear_forward: dim mismatch");
  Tensor y({N, O});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      float acc = b[o];
      for (int64_t i = 0; i < I; ++i) acc += x(n, i) * w(o, i);
      y(n, o) = acc;
    }
  return y;
}

Tensor linear_backward_input(const Tensor& gy, const Tensor& w) {
  const int64_t N = gy.size(0), O = gy.size(1), I = w.size(1);
  Tensor gx({N, I});
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < I; ++i) {
      float acc = 0.0f;
      for (int64_t o = 0; o < O; ++o) acc += gy(n, o) * w(o, i);
      gx(n, i) = acc;
    }
  return gx;
}

void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb) {
  const int64_t N = gy.size(0), O = gy.size(1), I = x.size(1);
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < O; ++o) {
    for (int64_t i = 0; i < I; ++i) {
      float acc = 0.0f;
      for (int64_t n = 0; n < N; ++n) acc += gy(n, o) * x(n, i);
      gw(o, i) += acc;
    }
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n) acc += gy(n, o);
    gb[o] += acc;
  }
}

void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const double m = double(N * H * W);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) s += double(x(n, c, y, xx));
    const double mu = s / m;
    double v = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double d = double(x(n, c, y, xx)) - mu;
          v += d * d;
        }
    mean[c] = float(mu);
    invstd[c] = float(1.0 / std::sqrt(v / m + eps));
  }
}

Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor y({N, C, H, W});
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    const float mu = mean[c], is = invstd[c], g = gamma[c], bb = beta[c];
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx)
          y(n, c, yy, xx) = g * ((x(n, c, yy, xx) - mu) * is) + bb;
  }
  return y;
}

Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta) {
  const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const double m = double(N * H * W);
  Tensor gx({N, C, H, W});
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    const double mu = mean[c], is = invstd[c], g = gamma[c];
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double gyv = gy(n, c, yy, xx);
          const double xhat = (double(x(n, c, yy, xx)) - mu) * is;
          sum_gy += gyv;
          sum_gy_xhat += gyv * xhat;
        }
    dbeta[c] += float(sum_gy);
    dgamma[c] += float(sum_gy_xhat);
    const double k = g * is / m;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double gyv = gy(n, c, yy, xx);
          const double xhat = (double(x(n, c, yy, xx)) - mu) * is;
          gx(n, c, yy, xx) = float(k * (m * gyv - sum_gy - xhat * sum_gy_xhat));
        }
  }
  return gx;
}

Tensor leaky_relu_forward(const Tensor& x, float slope) {
  Tensor y = Tensor::zeros_like(x);
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope) {
  Tensor gx = Tensor::zeros_like(x);
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
  return gx;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
  return y;
}

Tensor tanh_backward(const Tensor& gy, const Tensor& y) {
  Tensor gx = Tensor::zeros_like(y);
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) gx[i] = gy[i] * (1.0f - y[i] * y[i]);
  return gx;
}

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  const int64_t n = p.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = beta1 * double(m[i]) + (1.0 - beta1) * gi;
    const double vi = beta2 * double(v[i]) + (1.0 - beta2) * gi * gi;
    m[i] = float(mi);
    v[i] = float(vi);
    p[i] = float(double(p[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
  }
}

void axpy(Tensor& y, const Tensor& x, float a) {
  const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace omp

// ---------------------------------------------------------------------------
// Dispatchers.
// ---------------------------------------------------------------------------
#define PZG_DISPATCH(call) \
  return default_mode() == ExecMode::Serial ? ref::call : omp::call

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  PZG_DISPATCH(conv2d_forward(x, w, b, stride, pad));
}
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd, int stride, int pad) {
  PZG_DISPATCH(conv2d_backward_input(gy, w, h, wd, stride, pad));
}
void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  if (default_mode() == ExecMode::Serial)
    ref::conv2d_backward_params(gy, x, gw, gb, stride, pad);
  else
    omp::conv2d_backward_params(gy, x, gw, gb, stride, pad);
}
Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad) {
  PZG_DISPATCH(convt2d_forward(x, wt, b, stride, pad));
}
Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd, int stride, int pad) {
  PZG_DISPATCH(convt2d_backward_input(gy, wt, h, wd, stride, pad));
}
void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad) {
  if (default_mode() == ExecMode::Serial)
    ref::convt2d_backward_params(gy, x, gw, gb, stride, pad);
  else
    omp::convt2d_backward_params(gy, x, gw, gb, stride, pad);
}
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  PZG_DISPATCH(linear_forward(x, w, b));
}
Tensor linear_backward_input(const Tensor& gy, const Tensor& w) {
  PZG_DISPATCH(linear_backward_input(gy, w));
}
void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb) {
  if (default_mode() == ExecMode::Serial)
    ref::linear_backward_params(gy, x, gw, gb);
  else
    omp::linear_backward_params(gy, x, gw, gb);
}
void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps) {
  if (default_mode() == ExecMode::Serial)
    ref::batchnorm2d_stats(x, mean, invstd, eps);
  else
    omp::batchnorm2d_stats(x, mean, invstd, eps);
}
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd) {
  PZG_DISPATCH(batchnorm2d_forward(x, gamma, beta, mean, invstd));
}
Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta) {
  PZG_DISPATCH(batchnorm2d_backward(gy, x, gamma, mean, invstd, dgamma, dbeta));
}
Tensor leaky_relu_forward(const Tensor& x, float slope) { PZG_DISPATCH(leaky_relu_forward(x, slope)); }
Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope) {
  PZG_DISPATCH(leaky_relu_backward(gy, x, slope));
}
Tensor tanh_forward(const Tensor& x) { PZG_DISPATCH(tanh_forward(x)); }
Tensor tanh_backward(const Tensor& gy, const Tensor& y) { PZG_DISPATCH(tanh_backward(gy, y)); }
void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps) {
  if (default_mode() == ExecMode::Serial)
    ref::adam_step(p, g, m, v, t, lr, beta1, beta2, eps);
  else
    omp::adam_step(p, g, m, v, t, lr, beta1, beta2, eps);
}
void axpy(Tensor& y, const Tensor& x, float a) {
  if (default_mode() == ExecMode::Serial)
    ref::axpy(y, x, a);
  else
    omp::axpy(y, x, a);
}

#undef PZG_DISPATCH

}  // namespace puzzlegan::kernels
