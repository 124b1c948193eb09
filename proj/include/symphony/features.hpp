#pragma once

// Image features used by loop detection: DCT perceptual hash and SSIM.
//
// pHash: luma -> area-average resize to 32x32 -> 2-D DCT-II -> the 8x8 block
// of lowest non-DC frequencies (rows 1..8, cols 1..8) -> bit set where the
// coefficient is strictly greater than the block median.
//
// SSIM: luma, box-downsampled so the longer side is at most `max_side`,
// 11x11 Gaussian window (sigma 1.5) over fully-contained windows only,
// K1 = 0.01, K2 = 0.03, L = 255, mean over the map.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "symphony/error.hpp"
#include "symphony/image.hpp"

namespace symphony {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  double at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
};

inline GrayImage to_gray(const Image& img) {
  GrayImage g{img.width(), img.height(), {}};
  g.px.resize(static_cast<std::size_t>(img.width()) * img.height());
  const auto b = img.bytes();
  for (std::size_t i = 0; i < g.px.size(); ++i)
    g.px[i] = 0.299 * b[3 * i] + 0.587 * b[3 * i + 1] + 0.114 * b[3 * i + 2];
  return g;
}

// Counters observable by tests; the "space-for-time" cache claim is checked
// against them.
struct FeatureCounters {
  std::atomic<std::uint64_t> phash{0};
  std::atomic<std::uint64_t> ssim_buffer{0};
  std::atomic<std::uint64_t> ssim_pair{0};

  void reset() {
    phash = 0;
    ssim_buffer = 0;
    ssim_pair = 0;
  }
};

inline FeatureCounters& feature_counters() {
  static FeatureCounters counters;
  return counters;
}

// ---------------------------------------------------------------------------
// pHash

namespace detail {

// Row-stochastic matrix mapping `src` samples onto `dst` cells by overlap.
inline std::vector<double> area_weights(int src, int dst) {
  std::vector<double> w(static_cast<std::size_t>(dst) * src, 0.0);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int s = static_cast<int>(std::floor(lo)); s < src && s < hi; ++s) {
      const double overlap = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      if (overlap > 0) w[static_cast<std::size_t>(o) * src + s] = overlap / scale;
    }
  }
  return w;
}

inline std::array<double, 32 * 32> resize32(const GrayImage& g) {
  const auto wx = area_weights(g.width, 32);
  const auto wy = area_weights(g.height, 32);
  std::vector<double> rows(static_cast<std::size_t>(32) * g.width, 0.0);
  for (int oy = 0; oy < 32; ++oy)
    for (int y = 0; y < g.height; ++y) {
      const double w = wy[static_cast<std::size_t>(oy) * g.height + y];
      if (w == 0.0) continue;
      for (int x = 0; x < g.width; ++x) rows[static_cast<std::size_t>(oy) * g.width + x] += w * g.at(x, y);
    }
  std::array<double, 32 * 32> out{};
  for (int oy = 0; oy < 32; ++oy)
    for (int ox = 0; ox < 32; ++ox) {
      double acc = 0.0;
      for (int x = 0; x < g.width; ++x)
        acc += wx[static_cast<std::size_t>(ox) * g.width + x] * rows[static_cast<std::size_t>(oy) * g.width + x];
      out[oy * 32 + ox] = acc;
    }
  return out;
}

inline const std::array<double, 32 * 32>& dct_table() {
  static const auto table = [] {
    std::array<double, 32 * 32> t{};
    for (int k = 0; k < 32; ++k)
      for (int n = 0; n < 32; ++n)
        t[k * 32 + n] = std::cos(std::numbers::pi * (2 * n + 1) * k / 64.0);
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::uint64_t perceptual_hash(const Image& img) {
  if (img.empty()) fail(ErrorCode::DegenerateImage, "cannot hash a zero-size image");
  feature_counters().phash.fetch_add(1, std::memory_order_relaxed);
  const auto small = detail::resize32(to_gray(img));
  const auto& c = detail::dct_table();
  // Separable DCT-II restricted to frequencies 0..8.
  std::array<double, 9 * 32> by_row{};
  for (int v = 0; v <= 8; ++v)
    for (int y = 0; y < 32; ++y) {
      double acc = 0.0;
      for (int x = 0; x < 32; ++x) acc += c[v * 32 + x] * small[y * 32 + x];
      by_row[v * 32 + y] = acc;
    }
  std::array<double, 64> block{};
  double dc = 0.0;
  for (int y = 0; y < 32; ++y) dc += by_row[y];
  for (int u = 1; u <= 8; ++u)
    for (int v = 1; v <= 8; ++v) {
      double acc = 0.0;
      for (int y = 0; y < 32; ++y) acc += c[u * 32 + y] * by_row[v * 32 + y];
      block[(u - 1) * 8 + (v - 1)] = acc;
    }
  // Rounding noise on flat regions must not decide bits.
  const double eps = 1e-9 * (std::abs(dc) + 1.0);
  for (auto& v : block)
    if (std::abs(v) < eps) v = 0.0;
  auto sorted = block;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[31] + sorted[32]);
  std::uint64_t hash = 0;
  for (int i = 0; i < 64; ++i)
    if (block[i] > median) hash |= std::uint64_t{1} << (63 - i);
  return hash;
}

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

// ---------------------------------------------------------------------------
// SSIM

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimRange = 255.0;
inline constexpr int kSsimDefaultMaxSide = 512;

inline GrayImage box_downsample(const GrayImage& g, int max_side) {
  const int longest = std::max(g.width, g.height);
  if (max_side <= 0 || longest <= max_side) return g;
  const int f = (longest + max_side - 1) / max_side;
  GrayImage out{g.width / f, g.height / f, {}};
  out.px.assign(static_cast<std::size_t>(out.width) * out.height, 0.0);
  const double inv = 1.0 / (f * f);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) acc += g.at(x * f + dx, y * f + dy);
      out.px[static_cast<std::size_t>(y) * out.width + x] = acc * inv;
    }
  return out;
}

namespace detail {

inline const std::array<double, kSsimWindow>& gaussian_window() {
  static const auto w = [] {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      k[i] = std::exp(-(d * d) / (2 * kSsimSigma * kSsimSigma));
      sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Weighted local mean over every fully-contained window ("valid" output).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
  const auto& k = gaussian_window();
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

// Per-image half of the SSIM computation: luma buffer plus its local means and
// local second moments. Only the cross term depends on the pair.
struct SsimBuffer {
  GrayImage gray;
  std::vector<double> mu;
  std::vector<double> sq;  // local E[x^2]
  bool windowed = true;    // false when the image is smaller than the window
};

inline SsimBuffer make_ssim_buffer(const Image& img, int max_side = kSsimDefaultMaxSide) {
  if (img.empty()) fail(ErrorCode::DegenerateImage, "cannot compute SSIM on a zero-size image");
  feature_counters().ssim_buffer.fetch_add(1, std::memory_order_relaxed);
  SsimBuffer b;
  b.gray = box_downsample(to_gray(img), max_side);
  const int w = b.gray.width;
  const int h = b.gray.height;
  std::vector<double> squares(b.gray.px.size());
  for (std::size_t i = 0; i < squares.size(); ++i) squares[i] = b.gray.px[i] * b.gray.px[i];
  if (w < kSsimWindow || h < kSsimWindow) {
    // Single global window with uniform weights.
    b.windowed = false;
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < squares.size(); ++i) {
      m += b.gray.px[i];
      s += squares[i];
    }
    b.mu = {m / squares.size()};
    b.sq = {s / squares.size()};
    return b;
  }
  b.mu = detail::filter_valid(b.gray.px, w, h);
  b.sq = detail::filter_valid(squares, w, h);
  return b;
}

inline double ssim(const SsimBuffer& a, const SsimBuffer& b) {
  if (a.gray.width != b.gray.width || a.gray.height != b.gray.height)
    fail(ErrorCode::DimensionMismatch, "SSIM inputs differ in size");
  feature_counters().ssim_pair.fetch_add(1, std::memory_order_relaxed);
  const double c1 = (kSsimK1 * kSsimRange) * (kSsimK1 * kSsimRange);
  const double c2 = (kSsimK2 * kSsimRange) * (kSsimK2 * kSsimRange);
  std::vector<double> cross(a.gray.px.size());
  for (std::size_t i = 0; i < cross.size(); ++i) cross[i] = a.gray.px[i] * b.gray.px[i];
  std::vector<double> mu_ab;
  if (a.windowed) {
    mu_ab = detail::filter_valid(cross, a.gray.width, a.gray.height);
  } else {
    double m = 0.0;
    for (double v : cross) m += v;
    mu_ab = {m / cross.size()};
  }
  double total = 0.0;
  for (std::size_t i = 0; i < mu_ab.size(); ++i) {
    const double ma = a.mu[i], mb = b.mu[i];
    const double va = a.sq[i] - ma * ma;
    const double vb = b.sq[i] - mb * mb;
    const double cov = mu_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_ab.size());
}

inline double ssim(const Image& a, const Image& b, int max_side = kSsimDefaultMaxSide) {
  if (a.width() != b.width() || a.height() != b.height())
    fail(ErrorCode::DimensionMismatch, "SSIM inputs differ in size");
  return ssim(make_ssim_buffer(a, max_side), make_ssim_buffer(b, max_side));
}

}  // namespace symphony
