#include "puzzlegan/shuffler.hpp"

#include <stdexcept>

namespace puzzlegan::shuffler {

namespace {

constexpr int kGrid = 3;

void check_batch(const Tensor& batch) {
  if (batch.dim() != 4)
    throw std::invalid_argument("shuffler: expected NxCxHxW batch, got " + batch.shape_str());
  if (batch.size(2) < kGrid || batch.size(3) < kGrid)
    throw std::invalid_argument("shuffler: spatial dims must be >= 3");
}

// Copies the cropped region of src into dst with tiles rearranged by perm
// (destination slot i <- source tile perm.order[i]); everything outside the
// cropped region of dst stays zero.
void rearrange_sample(const Tensor& src, Tensor& dst, int64_t n,
                      const permset::Permutation& perm, const ShuffleGeometry& g) {
  const int64_t C = src.size(1);
  for (int64_t c = 0; c < C; ++c)
    for (int slot = 0; slot < kGrid * kGrid; ++slot) {
      const int src_tile = perm.order[size_t(slot)];
      const int dr = slot / kGrid, dc = slot % kGrid;
      const int sr = src_tile / kGrid, sc = src_tile % kGrid;
      const int dy0 = g.pad_top + dr * g.tile_h, dx0 = g.pad_left + dc * g.tile_w;
      const int sy0 = g.pad_top + sr * g.tile_h, sx0 = g.pad_left + sc * g.tile_w;
      for (int y = 0; y < g.tile_h; ++y)
        for (int x = 0; x < g.tile_w; ++x)
          dst(n, c, dy0 + y, dx0 + x) = src(n, c, sy0 + y, sx0 + x);
    }
}

void check_labels(const std::vector<int>& labels, const permset::PermutationSet& set, int64_t n) {
  if (int64_t(labels.size()) != n)
    throw std::invalid_argument("shuffler: labels length does not match batch size");
  for (int l : labels)
    if (l < 0 || l >= set.k())
      throw std::invalid_argument("shuffler: label " + std::to_string(l) + " out of range [0," +
                                  std::to_string(set.k()) + ")");
}

}  // namespace

ShuffleGeometry compute_geometry(int h, int w) {
  if (h < kGrid || w < kGrid)
    throw std::invalid_argument("compute_geometry: h and w must be >= 3");
  ShuffleGeometry g;
  g.cropped_h = kGrid * (h / kGrid);
  g.cropped_w = kGrid * (w / kGrid);
  g.tile_h = g.cropped_h / kGrid;
  g.tile_w = g.cropped_w / kGrid;
  const int rh = h - g.cropped_h, rw = w - g.cropped_w;
  g.pad_top = rh / 2;
  g.pad_bottom = rh - g.pad_top;
  g.pad_left = rw / 2;
  g.pad_right = rw - g.pad_left;
  return g;
}

Tensor apply_shuffle(const Tensor& batch, const permset::PermutationSet& set,
                     const std::vector<int>& labels) {
  check_batch(batch);
  if (set.tile_count != kGrid * kGrid)
    throw std::invalid_argument("shuffler: unsupported configuration, tile_count must be 9");
  const int64_t N = batch.size(0);
  check_labels(labels, set, N);
  const ShuffleGeometry g = compute_geometry(int(batch.size(2)), int(batch.size(3)));
  Tensor out(batch.shape());  // zeros; pad ring stays zero
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n)
    rearrange_sample(batch, out, n, set.permutations[size_t(labels[size_t(n)])], g);
  return out;
}

ShuffleResult shuffle(const Tensor& batch, const permset::PermutationSet& set, Rng& rng) {
  check_batch(batch);
  if (set.tile_count != kGrid * kGrid)
    throw std::invalid_argument("shuffler: unsupported configuration, tile_count must be 9");
  ShuffleResult r;
  r.labels.resize(size_t(batch.size(0)));
  for (auto& l : r.labels) l = int(rng.uniform_int(set.k()));
  r.geometry = compute_geometry(int(batch.size(2)), int(batch.size(3)));
  r.shuffled = apply_shuffle(batch, set, r.labels);
  return r;
}

Tensor deshuffle(const Tensor& shuffled, const std::vector<int>& labels,
                 const permset::PermutationSet& set, const ShuffleGeometry& geometry) {
  check_batch(shuffled);
  const int64_t N = shuffled.size(0);
  check_labels(labels, set, N);
  const ShuffleGeometry expect = compute_geometry(int(shuffled.size(2)), int(shuffled.size(3)));
  if (!(expect == geometry))
    throw std::invalid_argument("deshuffle: geometry inconsistent with batch shape");
  Tensor out(shuffled.shape());
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    const permset::Permutation inv =
        permset::inverse(set.permutations[size_t(labels[size_t(n)])]);
    rearrange_sample(shuffled, out, n, inv, geometry);
  }
  return out;
}

Tensor shuffle_backward(const Tensor& gy, const std::vector<int>& labels,
                        const permset::PermutationSet& set, const ShuffleGeometry& geometry) {
  // Output pixel (slot i) copies input pixel (tile order[i]), so the adjoint
  // routes grad at slot i back to tile order[i]: exactly the inverse
  // rearrangement with the pad ring (constant outputs) dropped.
  return deshuffle(gy, labels, set, geometry);
}

}  // namespace puzzlegan::shuffler
