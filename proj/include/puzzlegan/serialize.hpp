#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace puzzlegan::serialize {

// Little-endian binary stream helpers for checkpoints. Fixed-width fields
// only; every read checks for truncation.

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw_le(v); }
  void u64(uint64_t v) { raw_le(v); }
  void i64(int64_t v) { raw_le(uint64_t(v)); }
  void f32(float v) {
    uint32_t b;
    std::memcpy(&b, &v, 4);
    raw_le(b);
  }
  void f64(double v) {
    uint64_t b;
    std::memcpy(&b, &v, 8);
    raw_le(b);
  }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void f32v(const std::vector<float>& v) {
    u64(v.size());
    for (float x : v) f32(x);
  }
  void i64v(const std::vector<int64_t>& v) {
    u64(v.size());
    for (int64_t x : v) i64(x);
  }
  void intv(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i64(x);
  }
  void rng_state(const std::array<uint64_t, 4>& s) {
    for (uint64_t w : s) u64(w);
  }
  void raw(const void* p, size_t n) { os_.write(static_cast<const char*>(p), std::streamsize(n)); }

  bool ok() const { return bool(os_); }

 private:
  template <typename T>
  void raw_le(T v) {
    uint8_t buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = uint8_t(v >> (8 * i));
    raw(buf, sizeof(T));
  }
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  uint8_t u8() {
    uint8_t v;
    raw(&v, 1);
    return v;
  }
  uint32_t u32() { return read_le<uint32_t>(); }
  uint64_t u64() { return read_le<uint64_t>(); }
  int64_t i64() { return int64_t(read_le<uint64_t>()); }
  float f32() {
    const uint32_t b = read_le<uint32_t>();
    float v;
    std::memcpy(&v, &b, 4);
    return v;
  }
  double f64() {
    const uint64_t b = read_le<uint64_t>();
    double v;
    std::memcpy(&v, &b, 8);
    return v;
  }
  std::string str() {
    const uint64_t n = u64();
    check_len(n);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<float> f32v() {
    const uint64_t n = u64();
    check_len(n * 4);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::vector<int64_t> i64v() {
    const uint64_t n = u64();
    check_len(n * 8);
    std::vector<int64_t> v(n);
    for (auto& x : v) x = i64();
    return v;
  }
  std::vector<int> intv() {
    const uint64_t n = u64();
    check_len(n * 8);
    std::vector<int> v(n);
    for (auto& x : v) x = int(i64());
    return v;
  }
  std::array<uint64_t, 4> rng_state() {
    std::array<uint64_t, 4> s;
    for (auto& w : s) w = u64();
    return s;
  }
  void raw(void* p, size_t n) {
    is_.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(is_.gcount()) != n) throw std::runtime_error("serialize: truncated stream");
  }

 private:
  template <typename T>
  T read_le() {
    uint8_t buf[sizeof(T)];
    raw(buf, sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= T(buf[i]) << (8 * i);
    return v;
  }
  void check_len(uint64_t n) {
    if (n > (1ULL << 33))  // cheap sanity against corrupt length prefixes
      throw std::runtime_error("serialize: implausible length field");
  }
  std::istream& is_;
};

// FNV-1a over a serialized blob, used for checkpoint header digests.
inline uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Atomic file write: stream into <path>.tmp, then rename over path.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& fill);

}  // namespace puzzlegan::serialize
