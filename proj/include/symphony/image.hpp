#pragma once

// Raster images, screen geometry and the byte-level codecs the kernel needs:
// PNG (wire and on-disk screenshots), base64 (JSON transport) and SHA-256
// content hashes (image file names in trajectory logs).

#include <png.h>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "symphony/error.hpp"

namespace symphony {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) {
  const double dx = static_cast<double>(a.x) - b.x;
  const double dy = static_cast<double>(a.y) - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

class ScreenGeometry {
 public:
  ScreenGeometry() = default;
  ScreenGeometry(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0)
      fail(ErrorCode::Precondition, "screen geometry must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double diagonal() const {
    return std::sqrt(static_cast<double>(width_) * width_ + static_cast<double>(height_) * height_);
  }
  bool contains(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }

  friend bool operator==(const ScreenGeometry&, const ScreenGeometry&) = default;

 private:
  int width_ = 1920;
  int height_ = 1080;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB raster, row-major, tightly packed.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {})
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
    if (width < 0 || height < 0) fail(ErrorCode::Precondition, "negative image size");
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }
  Image(int width, int height, std::vector<std::uint8_t> rgb)
      : width_(width), height_(height), pixels_(std::move(rgb)) {
    if (pixels_.size() != static_cast<std::size_t>(width) * height * 3)
      fail(ErrorCode::Precondition, "pixel buffer does not match image size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  ScreenGeometry geometry() const { return {width_, height_}; }

  Rgb at(int x, int y) const {
    const auto i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, width_);
    y1 = std::min(y1, height_);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(x, y, c);
  }

  // Copy of the half-open rectangle [x0,x1)x[y0,y1).
  Image crop(int x0, int y0, int x1, int y1) const {
    Image out(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) out.set(x - x0, y - y0, at(x, y));
    return out;
  }

  std::span<const std::uint8_t> bytes() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// ---------------------------------------------------------------------------
// PNG

namespace detail {
struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};
inline void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + len);
}
inline void png_flush_cb(png_structp) {}

struct PngReadBuffer {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
};
inline void png_read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + len > buf->in.size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, buf->in.data() + buf->pos, len);
  buf->pos += len;
}
inline void png_error_cb(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}
inline void png_warning_cb(png_structp, png_const_charp) {}
}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.empty()) fail(ErrorCode::DegenerateImage, "cannot encode an empty image");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_cb,
                                            detail::png_warning_cb);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  detail::PngWriteBuffer buf{&out};
  std::vector<png_const_bytep> rows(img.height());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::SchemaError, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &buf, detail::png_write_cb, detail::png_flush_cb);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto bytes = img.bytes();
  for (int y = 0; y < img.height(); ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width() * 3;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Image decode_png(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0)
    fail(ErrorCode::SchemaError, "not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_cb,
                                           detail::png_warning_cb);
  png_infop info = png_create_info_struct(png);
  detail::PngReadBuffer buf{data, 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::SchemaError, "PNG decode failed: " + err);
  }
  png_set_read_fn(png, &buf, detail::png_read_cb);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

// ---------------------------------------------------------------------------
// base64 / sha256

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) fail(ErrorCode::SchemaError, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) fail(ErrorCode::SchemaError, "invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(data.data(), data.size(), digest);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 0xf]);
  }
  return out;
}

// Content hash of the raw raster (dimensions included), independent of PNG
// encoder settings.
inline std::string content_hash(const Image& img) {
  std::vector<std::uint8_t> buf(8);
  const auto w = static_cast<std::uint32_t>(img.width());
  const auto h = static_cast<std::uint32_t>(img.height());
  for (int i = 0; i < 4; ++i) {
    buf[i] = static_cast<std::uint8_t>(w >> (8 * i));
    buf[4 + i] = static_cast<std::uint8_t>(h >> (8 * i));
  }
  const auto px = img.bytes();
  buf.insert(buf.end(), px.begin(), px.end());
  return sha256_hex(buf);
}

}  // namespace symphony
