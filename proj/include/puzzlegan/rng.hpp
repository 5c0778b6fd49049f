#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace puzzlegan {

// xoshiro256** with splitmix64 seeding. Self-contained so that checkpointed
// streams restore bit-identically on any platform; std engines make no such
// cross-implementation promise.
class Rng {
 public:
  Rng() : Rng(seeded(0)) {}

  static Rng seeded(uint64_t seed) {
    Rng r(tag{});
    uint64_t x = seed;
    for (auto& w : r.state_) w = splitmix64(x);
    return r;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  // Uniform integer in [0, n), rejection-sampled (unbiased).
  int64_t uniform_int(int64_t n) {
    const uint64_t un = uint64_t(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return int64_t(v % un);
  }

  // Standard normal via Box-Muller. Consumes exactly two uniforms and caches
  // nothing, so stream state fully determines every draw (checkpoint-safe).
  double normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

  bool operator==(const Rng& o) const { return state_ == o.state_; }

  // Derives an independent stream id from a base seed.
  static uint64_t mix(uint64_t seed, uint64_t stream) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return splitmix64(x);
  }

 private:
  struct tag {};
  explicit Rng(tag) {}

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> state_{};
};

}  // namespace puzzlegan
