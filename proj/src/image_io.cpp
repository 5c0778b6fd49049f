#include "puzzlegan/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace puzzlegan::image_io {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct JpegErr {
  jpeg_error_mgr mgr;
  jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  longjmp(reinterpret_cast<JpegErr*>(cinfo->err)->jump, 1);
}

ImageU8 decode_png(FILE* f, const std::filesystem::path& p) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CodecError("png: allocation failure for " + p.string());
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CodecError("png: corrupt file " + p.string());
  }
  png_init_io(png, f);
  png_read_info(png, info);
  png_set_expand(png);          // palette/gray/trns -> full depth
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw CodecError("png: unsupported channel layout in " + p.string());
  }
  img.rgb.resize(size_t(img.width) * size_t(img.height) * 3);
  rows.resize(size_t(img.height));
  for (int y = 0; y < img.height; ++y) rows[size_t(y)] = img.rgb.data() + size_t(y) * size_t(img.width) * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

ImageU8 decode_jpeg(FILE* f, const std::filesystem::path& p) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw CodecError("jpeg: corrupt file " + p.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img;
  img.width = int(cinfo.output_width);
  img.height = int(cinfo.output_height);
  img.rgb.resize(size_t(img.width) * size_t(img.height) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.rgb.data() + size_t(cinfo.output_scanline) * size_t(img.width) * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

ImageFormat detect_format(const std::filesystem::path& p) {
  FilePtr f(std::fopen(p.c_str(), "rb"));
  if (!f) return ImageFormat::Unknown;
  unsigned char magic[8] = {0};
  const size_t got = std::fread(magic, 1, sizeof(magic), f.get());
  if (got >= 8 && !std::memcmp(magic, "\x89PNG\r\n\x1a\n", 8)) return ImageFormat::Png;
  if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return ImageFormat::Jpeg;
  return ImageFormat::Unknown;
}

ImageU8 decode_image(const std::filesystem::path& p) {
  const ImageFormat fmt = detect_format(p);
  if (fmt == ImageFormat::Unknown)
    throw CodecError("unsupported image format (PNG and JPEG only): " + p.string());
  FilePtr f(std::fopen(p.c_str(), "rb"));
  if (!f) throw CodecError("cannot open " + p.string());
  return fmt == ImageFormat::Png ? decode_png(f.get(), p) : decode_jpeg(f.get(), p);
}

void write_png(const std::filesystem::path& p, const ImageU8& img) {
  FilePtr f(std::fopen(p.c_str(), "wb"));
  if (!f) throw CodecError("cannot open for writing " + p.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw CodecError("png: allocation failure");
  }
  std::vector<png_bytep> rows(size_t(img.height), nullptr);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw CodecError("png: write failed for " + p.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(img.rgb.data() + size_t(y) * size_t(img.width) * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: bad target size");
  if (src.width == out_w && src.height == out_h) return src;
  ImageU8 dst;
  dst.width = out_w;
  dst.height = out_h;
  dst.rgb.resize(size_t(out_w) * size_t(out_h) * 3);
  const double sx = double(src.width) / out_w, sy = double(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(int(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(int(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
        const double bot = (1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
        dst.rgb[size_t((y * out_w + x) * 3 + c)] =
            uint8_t(std::lround(std::clamp((1 - wy) * top + wy * bot, 0.0, 255.0)));
      }
    }
  }
  return dst;
}

Tensor to_tensor(const ImageU8& img) {
  Tensor t({3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t[int64_t((c * img.height + y) * img.width + x)] = float(img.at(y, x, c)) / 127.5f - 1.0f;
  return t;
}

ImageU8 to_image(const Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3)
    throw std::invalid_argument("to_image: expected 3xHxW tensor");
  ImageU8 img;
  img.height = int(chw.size(1));
  img.width = int(chw.size(2));
  img.rgb.resize(size_t(img.width) * size_t(img.height) * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(chw[int64_t((c * img.height + y) * img.width + x)], -1.0f, 1.0f);
        img.rgb[size_t((y * img.width + x) * 3 + c)] = uint8_t(std::lround((v + 1.0f) * 127.5f));
      }
  return img;
}

ImageU8 make_grid(const Tensor& batch) {
  if (batch.dim() != 4 || batch.size(1) != 3)
    throw std::invalid_argument("make_grid: expected Nx3xHxW batch");
  const int n = int(batch.size(0)), h = int(batch.size(2)), w = int(batch.size(3));
  const int cols = int(std::ceil(std::sqrt(double(n))));
  const int rows = (n + cols - 1) / cols;
  ImageU8 grid;
  grid.width = cols * w;
  grid.height = rows * h;
  grid.rgb.assign(size_t(grid.width) * size_t(grid.height) * 3, 0);
  for (int i = 0; i < n; ++i) {
    const int gy = (i / cols) * h, gx = (i % cols) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const float v = std::clamp(batch(i, c, y, x), -1.0f, 1.0f);
          grid.rgb[size_t(((gy + y) * grid.width + gx + x) * 3 + c)] =
              uint8_t(std::lround((v + 1.0f) * 127.5f));
        }
  }
  return grid;
}

}  // namespace puzzlegan::image_io
