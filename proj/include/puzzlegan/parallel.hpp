#pragma once

#include <atomic>

namespace puzzlegan::kernels {

enum class ExecMode { Serial, Parallel };

// Process-wide default used when a kernel call does not pin a mode. Parallel
// kernels keep a fixed per-output accumulation order, so both modes produce
// bitwise-identical results at any thread count.
ExecMode default_mode();
void set_default_mode(ExecMode m);

}  // namespace puzzlegan::kernels
