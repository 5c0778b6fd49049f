#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace puzzlegan::permset {

// order[i] is the source-tile index placed at destination slot i. Always a
// bijection on {0..T-1}.
struct Permutation {
  std::vector<int> order;

  bool operator==(const Permutation&) const = default;
};

struct PermutationSet {
  std::vector<Permutation> permutations;  // permutations[0] is the identity
  int tile_count = 0;
  uint64_t generation_seed = 0;
  int min_pairwise_hamming = 0;

  bool operator==(const PermutationSet&) const = default;
  int k() const { return int(permutations.size()); }
};

// Positions where a and b disagree. Throws std::invalid_argument on length
// mismatch.
int hamming(const Permutation& a, const Permutation& b);

// Greedy selection: start from the identity, then repeatedly add the candidate
// with the largest minimum Hamming distance to everything already selected,
// breaking ties toward the lexicographically smallest order. For tile_count
// <= 9 the candidate pool is the full symmetric group (seed is inert); above
// that, a pool of 100,000 seeded random permutations. Deterministic per
// (tile_count, k, seed).
PermutationSet generate_set(int tile_count, int64_t k, uint64_t seed);

// Line-oriented text format, UTF-8/LF:
//   tiles=<T> k=<K> seed=<S> minham=<m>
//   <T space-separated integers per line, K lines>
// load_set revalidates every invariant and reports the offending line.
void save_set(const PermutationSet& set, const std::filesystem::path& path);
PermutationSet load_set(const std::filesystem::path& path);

Permutation inverse(const Permutation& p);
Permutation identity_perm(int n);

// Recomputes the minimum pairwise Hamming distance over the whole set.
int min_pairwise_hamming(const std::vector<Permutation>& perms);

}  // namespace puzzlegan::permset
