#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "puzzlegan/tensor.hpp"

namespace puzzlegan::image_io {

struct ImageU8 {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // height*width*3, row-major

  uint8_t at(int y, int x, int c) const { return rgb[size_t((y * width + x) * 3 + c)]; }
};

struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ImageFormat { Png, Jpeg, Unknown };

// Sniffs the magic bytes; does not decode.
ImageFormat detect_format(const std::filesystem::path& p);

// PNG and baseline/progressive JPEG only; anything else is a CodecError.
ImageU8 decode_image(const std::filesystem::path& p);

void write_png(const std::filesystem::path& p, const ImageU8& img);

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h);

// [-1,1] float <-> u8 conversions used at the dataset/sample boundary.
Tensor to_tensor(const ImageU8& img);          // 3xHxW
ImageU8 to_image(const Tensor& chw);           // clamps to [-1,1]

// Tiles N samples (Nx3xSxS) into a ceil(sqrt(N))-column grid image.
ImageU8 make_grid(const Tensor& batch);

}  // namespace puzzlegan::image_io
