#pragma once

// Decoded 8-bit sRGB images, grayscale planes and JPEG/PNG codecs.

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "emoscene/corpus.hpp"
#include "emoscene/error.hpp"

namespace emoscene {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

// Row-major sRGB, 8 bits per channel.
class PixelImage {
 public:
  PixelImage() = default;
  PixelImage(int width, int height, Rgb fill = {}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::DegenerateImage, "image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  PixelImage(int width, int height, std::vector<Rgb> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::DegenerateImage, "image dimensions must be positive");
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw Error(ErrorCode::DegenerateImage, "pixel count does not match dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
  std::span<const Rgb> pixels() const { return pixels_; }
  std::span<Rgb> pixels() { return pixels_; }

  bool operator==(const PixelImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

// Single-channel floating-point plane.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  // Border pixels are replicated outside the image.
  double clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }
};

// ITU-R BT.601 luma on the 0-255 scale.
inline double luma601(const Rgb& p) { return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b; }

inline GrayImage to_gray(const PixelImage& img) {
  GrayImage g{img.width(), img.height(), {}};
  g.data.reserve(img.size());
  for (const auto& p : img.pixels()) g.data.push_back(luma601(p));
  return g;
}

// Integer gray level in [0,255] used for histograms: BT.601 luma rounded
// half up, computed exactly in integers.
inline int gray_level(const Rgb& p) { return (299 * p.r + 587 * p.g + 114 * p.b + 500) / 1000; }

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur with replicated borders.
inline GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma <= 0.0) return src;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  GrayImage tmp{src.width, src.height, std::vector<double>(src.data.size())};
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * src.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out{src.width, src.height, std::vector<double>(src.data.size())};
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Per-channel Gaussian blur of an RGB image, rounded back to 8 bits.
inline PixelImage gaussian_blur(const PixelImage& img, double sigma) {
  PixelImage out = img;
  for (int c = 0; c < 3; ++c) {
    GrayImage plane{img.width(), img.height(), {}};
    plane.data.reserve(img.size());
    for (const auto& p : img.pixels()) plane.data.push_back(c == 0 ? p.r : c == 1 ? p.g : p.b);
    const auto blurred = gaussian_blur(plane, sigma);
    auto dst = out.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(blurred.data[i]), 0L, 255L));
      (c == 0 ? dst[i].r : c == 1 ? dst[i].g : dst[i].b) = v;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codecs
// ---------------------------------------------------------------------------

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

inline void jpeg_silent(j_common_ptr, int) {}

// Returns false and fills `error` on failure. No objects with non-trivial
// destructors live between setjmp and a possible longjmp.
inline bool jpeg_decode_raw(const unsigned char* data, std::size_t size, std::vector<std::uint8_t>& out, int& width,
                            int& height, std::string& error) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_silent;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    error = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  out.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline bool jpeg_encode_raw(const std::uint8_t* rgb, int width, int height, int quality, unsigned char*& buffer,
                            unsigned long& size, std::string& error) {
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_silent;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    error = err.message;
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(rgb + static_cast<std::size_t>(cinfo.next_scanline) * width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

inline PixelImage from_interleaved(int width, int height, const std::vector<std::uint8_t>& rgb) {
  std::vector<Rgb> px(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = {rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]};
  return PixelImage(width, height, std::move(px));
}

inline std::vector<std::uint8_t> to_interleaved(const PixelImage& img) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(img.size() * 3);
  for (const auto& p : img.pixels()) {
    rgb.push_back(p.r);
    rgb.push_back(p.g);
    rgb.push_back(p.b);
  }
  return rgb;
}

}  // namespace detail

inline bool looks_like_png(std::string_view bytes) {
  return bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0;
}

inline bool looks_like_jpeg(std::string_view bytes) {
  return bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
         static_cast<unsigned char>(bytes[1]) == 0xD8;
}

inline PixelImage decode_png(std::string_view bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw Error(ErrorCode::DecodeError, std::string{"png: "} + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::DecodeError, "png: " + msg);
  }
  return detail::from_interleaved(static_cast<int>(image.width), static_cast<int>(image.height), rgb);
}

inline PixelImage decode_jpeg(std::string_view bytes) {
  std::vector<std::uint8_t> rgb;
  int w = 0, h = 0;
  std::string error;
  if (!detail::jpeg_decode_raw(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), rgb, w, h, error))
    throw Error(ErrorCode::DecodeError, "jpeg: " + error);
  return detail::from_interleaved(w, h, rgb);
}

// Sniffs the container from its magic bytes.
inline PixelImage decode_image(std::string_view bytes) {
  if (looks_like_png(bytes)) return decode_png(bytes);
  if (looks_like_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(ErrorCode::DecodeError, "unrecognised image container");
}

inline PixelImage load_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::DecodeError, path.string(), e.reason());
  }
}

inline std::string encode_jpeg(const PixelImage& img, int quality = 90) {
  const auto rgb = detail::to_interleaved(img);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  std::string error;
  const bool ok = detail::jpeg_encode_raw(rgb.data(), img.width(), img.height(), quality, buffer, size, error);
  std::string out;
  if (ok) out.assign(reinterpret_cast<const char*>(buffer), size);
  std::free(buffer);
  if (!ok) throw Error(ErrorCode::DecodeError, "jpeg encode: " + error);
  return out;
}

inline std::string encode_png(const PixelImage& img) {
  const auto rgb = detail::to_interleaved(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw Error(ErrorCode::DecodeError, std::string{"png encode: "} + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw Error(ErrorCode::DecodeError, std::string{"png encode: "} + image.message);
  out.resize(size);
  return out;
}

}  // namespace emoscene
