#include "puzzlegan/permset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "puzzlegan/rng.hpp"

namespace puzzlegan::permset {

namespace {

constexpr int kExhaustiveMaxTiles = 9;
constexpr size_t kSampledPoolSize = 100000;

// T! for small T; saturates instead of overflowing.
int64_t factorial_capped(int t) {
  int64_t f = 1;
  for (int i = 2; i <= t; ++i) {
    if (f > std::numeric_limits<int64_t>::max() / i) return std::numeric_limits<int64_t>::max();
    f *= i;
  }
  return f;
}

void validate_bijection(const std::vector<int>& order, int t, const std::string& where) {
  if (int(order.size()) != t)
    throw std::invalid_argument(where + ": expected " + std::to_string(t) + " entries");
  std::vector<char> seen(size_t(t), 0);
  for (int v : order) {
    if (v < 0 || v >= t)
      throw std::invalid_argument(where + ": index " + std::to_string(v) + " out of range");
    if (seen[size_t(v)])
      throw std::invalid_argument(where + ": index " + std::to_string(v) + " repeated");
    seen[size_t(v)] = 1;
  }
}

std::vector<Permutation> build_pool(int tile_count, uint64_t seed) {
  std::vector<Permutation> pool;
  if (tile_count <= kExhaustiveMaxTiles) {
    std::vector<int> cur(size_t(tile_count), 0);
    std::iota(cur.begin(), cur.end(), 0);
    do {
      pool.push_back({cur});
    } while (std::next_permutation(cur.begin(), cur.end()));
  } else {
    Rng rng = Rng::seeded(seed);
    std::set<std::vector<int>> uniq;
    std::vector<int> cur(size_t(tile_count), 0);
    std::iota(cur.begin(), cur.end(), 0);
    uniq.insert(cur);  // identity must be in the pool; it is selected first
    while (uniq.size() < kSampledPoolSize) {
      std::iota(cur.begin(), cur.end(), 0);
      for (int i = tile_count - 1; i > 0; --i)
        std::swap(cur[size_t(i)], cur[size_t(rng.uniform_int(i + 1))]);
      uniq.insert(cur);
    }
    for (const auto& o : uniq) pool.push_back({o});  // std::set is already lexicographic
  }
  return pool;
}

}  // namespace

int hamming(const Permutation& a, const Permutation& b) {
  if (a.order.size() != b.order.size())
    throw std::invalid_argument("hamming: permutations of unequal length");
  int d = 0;
  for (size_t i = 0; i < a.order.size(); ++i) d += a.order[i] != b.order[i];
  return d;
}

int min_pairwise_hamming(const std::vector<Permutation>& perms) {
  int best = perms.size() < 2 ? 0 : std::numeric_limits<int>::max();
  for (size_t i = 0; i < perms.size(); ++i)
    for (size_t j = i + 1; j < perms.size(); ++j)
      best = std::min(best, hamming(perms[i], perms[j]));
  return best;
}

Permutation identity_perm(int n) {
  Permutation p;
  p.order.resize(size_t(n));
  std::iota(p.order.begin(), p.order.end(), 0);
  return p;
}

Permutation inverse(const Permutation& p) {
  Permutation q;
  q.order.resize(p.order.size());
  for (size_t i = 0; i < p.order.size(); ++i) q.order[size_t(p.order[i])] = int(i);
  return q;
}

PermutationSet generate_set(int tile_count, int64_t k, uint64_t seed) {
  if (tile_count < 2) throw std::invalid_argument("generate_set: tile_count must be >= 2");
  if (k < 2) throw std::invalid_argument("generate_set: k must be >= 2");
  if (k > factorial_capped(tile_count))
    throw std::invalid_argument("generate_set: k exceeds tile_count! (infeasible)");

  std::vector<Permutation> pool = build_pool(tile_count, seed);
  if (int64_t(pool.size()) < k)
    throw std::invalid_argument("generate_set: candidate pool smaller than k");

  // pool is lexicographically sorted, identity first.
  std::vector<Permutation> selected{pool.front()};
  std::vector<char> taken(pool.size(), 0);
  taken[0] = 1;
  // min distance from each candidate to the selected set, updated incrementally
  std::vector<int> mind(pool.size(), std::numeric_limits<int>::max());

  while (int64_t(selected.size()) < k) {
    const Permutation& last = selected.back();
    int64_t best_i = -1;
    int best_d = -1;
    for (size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      mind[i] = std::min(mind[i], hamming(pool[i], last));
      if (mind[i] > best_d) {  // strictly greater keeps the lexicographically first tie
        best_d = mind[i];
        best_i = int64_t(i);
      }
    }
    taken[size_t(best_i)] = 1;
    selected.push_back(pool[size_t(best_i)]);
  }

  PermutationSet set;
  set.permutations = std::move(selected);
  set.tile_count = tile_count;
  set.generation_seed = seed;
  set.min_pairwise_hamming = min_pairwise_hamming(set.permutations);
  return set;
}

void save_set(const PermutationSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("save_set: cannot open " + path.string());
  out << "tiles=" << set.tile_count << " k=" << set.k() << " seed=" << set.generation_seed
      << " minham=" << set.min_pairwise_hamming << "\n";
  for (const Permutation& p : set.permutations) {
    for (size_t i = 0; i < p.order.size(); ++i) {
      if (i) out << ' ';
      out << p.order[i];
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_set: write failed for " + path.string());
}

PermutationSet load_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_set: cannot open " + path.string());

  auto fail = [&](int line, const std::string& msg) -> void {
    throw std::runtime_error("load_set: " + path.string() + ":" + std::to_string(line) + ": " + msg);
  };

  std::string header;
  if (!std::getline(in, header)) fail(1, "missing header");
  int tiles = 0, minham = 0;
  long long kk = 0;
  unsigned long long seed = 0;
  if (std::sscanf(header.c_str(), "tiles=%d k=%lld seed=%llu minham=%d", &tiles, &kk, &seed, &minham) != 4)
    fail(1, "malformed header (expected 'tiles=<T> k=<K> seed=<S> minham=<m>')");
  if (tiles < 2) fail(1, "tiles must be >= 2");
  if (kk < 1) fail(1, "k must be >= 1");

  PermutationSet set;
  set.tile_count = tiles;
  set.generation_seed = seed;
  set.min_pairwise_hamming = minham;

  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.eof()) break;
    std::istringstream ss(line);
    Permutation p;
    int v;
    while (ss >> v) p.order.push_back(v);
    if (!ss.eof()) fail(lineno, "non-integer token");
    try {
      validate_bijection(p.order, tiles, "row");
    } catch (const std::invalid_argument& e) {
      fail(lineno, e.what());
    }
    set.permutations.push_back(std::move(p));
    if (int64_t(set.permutations.size()) > kk) fail(lineno, "more rows than header k");
  }
  if (int64_t(set.permutations.size()) != kk)
    fail(lineno + 1, "row count " + std::to_string(set.permutations.size()) +
                         " does not match header k=" + std::to_string(kk));
  if (set.permutations.front() != identity_perm(tiles))
    fail(2, "first permutation must be the identity");
  for (size_t i = 0; i < set.permutations.size(); ++i)
    for (size_t j = i + 1; j < set.permutations.size(); ++j)
      if (set.permutations[i] == set.permutations[j])
        fail(int(j) + 2, "duplicate of row " + std::to_string(i + 2));
  const int recomputed = min_pairwise_hamming(set.permutations);
  if (recomputed != minham)
    fail(1, "minham=" + std::to_string(minham) + " but recomputed value is " +
                std::to_string(recomputed));
  return set;
}

}  // namespace puzzlegan::permset
