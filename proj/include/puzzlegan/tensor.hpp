#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace puzzlegan {

// Dense row-major float tensor. Shapes are small (<= 4 dims in practice);
// storage is always contiguous. Value semantics throughout.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int64_t s : shape_) {
      if (s <= 0) throw std::invalid_argument("Tensor: nonpositive dim");
      n *= s;
    }
    data_.assign(size_t(n), 0.0f);
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int dim() const { return int(shape_.size()); }
  int64_t size(int i) const { return shape_[size_t(i)]; }
  int64_t numel() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[size_t(i)]; }
  float operator[](int64_t i) const { return data_[size_t(i)]; }

  float& operator()(int64_t i, int64_t j) {
    assert(dim() == 2);
    return data_[size_t(i * shape_[1] + j)];
  }
  float operator()(int64_t i, int64_t j) const {
    assert(dim() == 2);
    return data_[size_t(i * shape_[1] + j)];
  }
  float& operator()(int64_t n, int64_t c, int64_t y, int64_t x) {
    assert(dim() == 4);
    return data_[size_t(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  float operator()(int64_t n, int64_t c, int64_t y, int64_t x) const {
    assert(dim() == 4);
    return data_[size_t(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<int64_t> shape) const {
    Tensor out;
    out.shape_ = std::move(shape);
    int64_t n = 1;
    for (int64_t s : out.shape_) n *= s;
    if (n != numel()) throw std::invalid_argument("Tensor::reshaped: numel mismatch");
    out.data_ = data_;
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

}  // namespace puzzlegan
