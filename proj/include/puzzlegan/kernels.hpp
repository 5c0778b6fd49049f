#pragma once

#include "puzzlegan/parallel.hpp"
#include "puzzlegan/tensor.hpp"

namespace puzzlegan::kernels {

// Compute kernels behind the layer zoo. Every op exists twice: a naive serial
// reference under ref:: (the ground truth the tests compare against) and an
// OpenMP version. The dispatchers below pick one by ExecMode; the default is
// the process-wide mode from parallel.hpp.
//
// Conventions:
//   x    N x Ci x H x W        input
//   w    Co x Ci x Kh x Kw     conv weight
//   wt   Ci x Co x Kh x Kw     transposed-conv weight
//   gy   gradient w.r.t. the op output, same shape as the output
//   backward_params kernels accumulate (+=) into gw/gb.

namespace ref {
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd, int stride, int pad);
void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad);
Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd, int stride, int pad);
void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward_input(const Tensor& gy, const Tensor& w);
void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb);

// Train-mode batchnorm; per-channel stats over (N, H, W), biased variance for
// normalization. mean/invstd are C-sized outputs consumed by the backward.
void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps);
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd);
Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta);

Tensor leaky_relu_forward(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& gy, const Tensor& y);

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps);

void axpy(Tensor& y, const Tensor& x, float a);  // y += a*x
}  // namespace ref

namespace omp {
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd, int stride, int pad);
void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad);
Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd, int stride, int pad);
void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward_input(const Tensor& gy, const Tensor& w);
void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb);

void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps);
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd);
Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta);

Tensor leaky_relu_forward(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& gy, const Tensor& y);

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps);

void axpy(Tensor& y, const Tensor& x, float a);
}  // namespace omp

// Mode-dispatching entry points (what the layers call).
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int64_t h, int64_t wd, int stride, int pad);
void conv2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor convt2d_forward(const Tensor& x, const Tensor& wt, const Tensor& b, int stride, int pad);
Tensor convt2d_backward_input(const Tensor& gy, const Tensor& wt, int64_t h, int64_t wd, int stride, int pad);
void convt2d_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb, int stride, int pad);

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward_input(const Tensor& gy, const Tensor& w);
void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb);

void batchnorm2d_stats(const Tensor& x, Tensor& mean, Tensor& invstd, double eps);
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& invstd);
Tensor batchnorm2d_backward(const Tensor& gy, const Tensor& x, const Tensor& gamma,
                            const Tensor& mean, const Tensor& invstd,
                            Tensor& dgamma, Tensor& dbeta);

Tensor leaky_relu_forward(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& gy, const Tensor& x, float slope);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& gy, const Tensor& y);

void adam_step(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, int64_t t,
               double lr, double beta1, double beta2, double eps);

void axpy(Tensor& y, const Tensor& x, float a);

inline int64_t conv_out_size(int64_t in, int64_t k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
inline int64_t convt_out_size(int64_t in, int64_t k, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + k;
}

}  // namespace puzzlegan::kernels
