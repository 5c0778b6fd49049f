#pragma once

#include <vector>

#include "puzzlegan/permset.hpp"
#include "puzzlegan/rng.hpp"
#include "puzzlegan/tensor.hpp"

namespace puzzlegan::shuffler {

// Crop/pad plan for the 3x3 tile grid. The cropped region is the largest
// centered H'xW' with H', W' divisible by 3; remainders split floor-top /
// ceil-bottom (and left/right alike), so 128 -> 126 with pads (1,1,1,1).
struct ShuffleGeometry {
  int cropped_h = 0, cropped_w = 0;
  int tile_h = 0, tile_w = 0;
  int pad_top = 0, pad_left = 0, pad_bottom = 0, pad_right = 0;

  bool operator==(const ShuffleGeometry&) const = default;
};

struct ShuffleResult {
  Tensor shuffled;          // same N,C,H,W as the input
  std::vector<int> labels;  // per-sample index into the permutation set
  ShuffleGeometry geometry;
};

ShuffleGeometry compute_geometry(int h, int w);

// Tile-permutation convention (load-bearing; the opposite reading silently
// corrupts the pseudo-labels): tiles are indexed row-major over the 3x3 grid
// of the cropped region, and destination slot i receives source tile
// set.permutations[label].order[i]. Pads are zero-filled.
//
// For fixed labels the op is a pure pixel rearrangement: every output pixel
// is a copy of exactly one input pixel or the constant 0, so gradients pass
// through it as the transposed rearrangement (shuffle_backward).
ShuffleResult shuffle(const Tensor& batch, const permset::PermutationSet& set, Rng& rng);

// Deterministic core of shuffle with the labels chosen by the caller.
Tensor apply_shuffle(const Tensor& batch, const permset::PermutationSet& set,
                     const std::vector<int>& labels);

// Exact inverse on the cropped region; the pad ring comes back zero. During
// training the network, not this function, performs deshuffling -- this is a
// test/diagnostic utility and the gradient path's building block.
Tensor deshuffle(const Tensor& shuffled, const std::vector<int>& labels,
                 const permset::PermutationSet& set, const ShuffleGeometry& geometry);

// Gradient of apply_shuffle w.r.t. its input for fixed labels.
Tensor shuffle_backward(const Tensor& gy, const std::vector<int>& labels,
                        const permset::PermutationSet& set, const ShuffleGeometry& geometry);

}  // namespace puzzlegan::shuffler
