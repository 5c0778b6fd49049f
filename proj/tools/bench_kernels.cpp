// Times each compute kernel in serial-reference and OpenMP form on shapes
// representative of a 48x48 training step and prints the speedup table.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "puzzlegan/kernels.hpp"
#include "puzzlegan/rng.hpp"

using namespace puzzlegan;

namespace {

Tensor randn(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal());
  return t;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, dt);
  }
  return best;
}

volatile float g_sink = 0.0f;

void row(const std::string& name, const std::function<void()>& serial,
         const std::function<void()>& parallel, int reps = 5) {
  const double ts = time_best_of(reps, serial);
  const double tp = time_best_of(reps, parallel);
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main() {
  Rng rng = Rng::seeded(42);

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {  // trunk-shaped strided conv, 32 x 16 x 24 x 24 -> 32 channels
    const Tensor x = randn({32, 16, 24, 24}, rng);
    const Tensor w = randn({32, 16, 4, 4}, rng);
    const Tensor b = randn({32}, rng);
    row("conv2d fwd 32x16x24x24",
        [&] { g_sink = kernels::ref::conv2d_forward(x, w, b, 2, 1)[0]; },
        [&] { g_sink = kernels::omp::conv2d_forward(x, w, b, 2, 1)[0]; });
    const Tensor gy = randn({32, 32, 12, 12}, rng);
    row("conv2d bwd-input",
        [&] { g_sink = kernels::ref::conv2d_backward_input(gy, w, 24, 24, 2, 1)[0]; },
        [&] { g_sink = kernels::omp::conv2d_backward_input(gy, w, 24, 24, 2, 1)[0]; });
    Tensor gw({32, 16, 4, 4}), gb({32});
    row("conv2d bwd-params",
        [&] { kernels::ref::conv2d_backward_params(gy, x, gw, gb, 2, 1); g_sink = gw[0]; },
        [&] { kernels::omp::conv2d_backward_params(gy, x, gw, gb, 2, 1); g_sink = gw[0]; });
  }
  {  // generator-shaped transposed conv, 32 x 64 x 6 x 6 -> 32 channels 12x12
    const Tensor x = randn({32, 64, 6, 6}, rng);
    const Tensor wt = randn({64, 32, 4, 4}, rng);
    const Tensor b = randn({32}, rng);
    row("convt2d fwd 32x64x6x6",
        [&] { g_sink = kernels::ref::convt2d_forward(x, wt, b, 2, 1)[0]; },
        [&] { g_sink = kernels::omp::convt2d_forward(x, wt, b, 2, 1)[0]; });
    const Tensor gy = randn({32, 32, 12, 12}, rng);
    row("convt2d bwd-input",
        [&] { g_sink = kernels::ref::convt2d_backward_input(gy, wt, 6, 6, 2, 1)[0]; },
        [&] { g_sink = kernels::omp::convt2d_backward_input(gy, wt, 6, 6, 2, 1)[0]; });
    Tensor gw({64, 32, 4, 4}), gb({32});
    row("convt2d bwd-params",
        [&] { kernels::ref::convt2d_backward_params(gy, x, gw, gb, 2, 1); g_sink = gw[0]; },
        [&] { kernels::omp::convt2d_backward_params(gy, x, gw, gb, 2, 1); g_sink = gw[0]; });
  }
  {  // projection layer, 32 x 128 -> 4608
    const Tensor x = randn({32, 128}, rng);
    const Tensor w = randn({4608, 128}, rng);
    const Tensor b = randn({4608}, rng);
    row("linear fwd 32x128->4608",
        [&] { g_sink = kernels::ref::linear_forward(x, w, b)[0]; },
        [&] { g_sink = kernels::omp::linear_forward(x, w, b)[0]; });
    const Tensor gy = randn({32, 4608}, rng);
    Tensor gw({4608, 128}), gb({4608});
    row("linear bwd-params",
        [&] { kernels::ref::linear_backward_params(gy, x, gw, gb); g_sink = gw[0]; },
        [&] { kernels::omp::linear_backward_params(gy, x, gw, gb); g_sink = gw[0]; });
  }
  {  // batchnorm over 32 x 32 x 12 x 12
    const Tensor x = randn({32, 32, 12, 12}, rng);
    Tensor mean({32}), invstd({32});
    row("batchnorm2d stats",
        [&] { kernels::ref::batchnorm2d_stats(x, mean, invstd, 1e-5); g_sink = mean[0]; },
        [&] { kernels::omp::batchnorm2d_stats(x, mean, invstd, 1e-5); g_sink = mean[0]; });
    const Tensor gamma = randn({32}, rng), beta = randn({32}, rng);
    kernels::ref::batchnorm2d_stats(x, mean, invstd, 1e-5);
    const Tensor gy = randn({32, 32, 12, 12}, rng);
    Tensor dg({32}), db({32});
    row("batchnorm2d bwd",
        [&] { g_sink = kernels::ref::batchnorm2d_backward(gy, x, gamma, mean, invstd, dg, db)[0]; },
        [&] { g_sink = kernels::omp::batchnorm2d_backward(gy, x, gamma, mean, invstd, dg, db)[0]; });
  }
  {  // pointwise + optimizer on 1M elements
    const Tensor x = randn({1 << 20}, rng);
    row("tanh fwd 1M",
        [&] { g_sink = kernels::ref::tanh_forward(x)[0]; },
        [&] { g_sink = kernels::omp::tanh_forward(x)[0]; });
    Tensor p = randn({1 << 20}, rng), m({1 << 20}), v({1 << 20});
    const Tensor g = randn({1 << 20}, rng);
    row("adam step 1M",
        [&] { kernels::ref::adam_step(p, g, m, v, 1, 2e-4, 0.5, 0.999, 1e-8); g_sink = p[0]; },
        [&] { kernels::omp::adam_step(p, g, m, v, 1, 2e-4, 0.5, 0.999, 1e-8); g_sink = p[0]; });
  }
  return 0;
}
