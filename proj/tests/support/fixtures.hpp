#pragma once

// Frozen image fixtures for the pHash and SSIM gates.
//
// The texture is symmetric about both image axes, so every DCT coefficient
// with an odd index vanishes and the 8x8 hash block holds 48 exact zeros.
// The median then sits at zero and each even-even coefficient owns exactly
// one hash bit: flipping the sign of one cosine term moves the Hamming
// distance by exactly one.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>

#include "symphony/image.hpp"

namespace symphony::test_support {

inline constexpr int kFixtureWidth = 160;
inline constexpr int kFixtureHeight = 100;

// Amplitudes of the even-even cosine terms; (8,8) and (6,8) are the small
// ones the boundary fixtures flip.
inline std::map<std::pair<int, int>, double> texture_amplitudes(double a88, double a68) {
  std::map<std::pair<int, int>, double> m;
  int i = 0;
  for (int u : {2, 4, 6, 8})
    for (int v : {2, 4, 6, 8}) {
      m[{u, v}] = (i % 3 == 0 ? -1.0 : 1.0) * (14.0 - i * 0.5);
      ++i;
    }
  m[{8, 8}] = a88;
  m[{6, 8}] = a68;
  return m;
}

inline Image symmetric_texture(double a88 = 1.0, double a68 = 1.0, int w = kFixtureWidth,
                               int h = kFixtureHeight) {
  const auto amps = texture_amplitudes(a88, a68);
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 128.0;
      for (const auto& [k, a] : amps)
        s += a * std::cos(std::numbers::pi * (2 * y + 1) * k.first / (2.0 * h)) *
             std::cos(std::numbers::pi * (2 * x + 1) * k.second / (2.0 * w));
      const auto g = static_cast<std::uint8_t>(std::clamp<long>(std::lround(s), 0, 255));
      img.set(x, y, {g, g, g});
    }
  return img;
}

// Centered square patch; centered keeps the symmetry so the hash is stable.
inline Image with_center_patch(Image img, int size, std::uint8_t value) {
  const int cx = img.width() / 2, cy = img.height() / 2;
  img.fill_rect(cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2, {value, value, value});
  return img;
}

struct GateFixture {
  const char* name;
  Image a;
  Image b;
  int hamming;
  double ssim;  // reference value at 1e-5
};

// Hash gate: one flipped bit passes, two flipped bits fail even though SSIM
// would pass.
inline GateFixture hash_one_bit() {
  return {"hash-1bit", symmetric_texture(), symmetric_texture(-1.0, 1.0), 1, 0.99642};
}
inline GateFixture hash_two_bits() {
  return {"hash-2bit", symmetric_texture(), symmetric_texture(-1.0, -1.0), 2, 0.99511};
}
// SSIM gate: same hash, SSIM just above and just below 0.99.
inline GateFixture ssim_just_above() {
  return {"ssim-above", symmetric_texture(), with_center_patch(symmetric_texture(), 16, 164), 0, 0.99060};
}
inline GateFixture ssim_just_below() {
  return {"ssim-below", symmetric_texture(), with_center_patch(symmetric_texture(), 16, 168), 0, 0.98996};
}
// A 20x20 cursor-sized patch: identical hash, SSIM clearly below the gate.
inline GateFixture cursor_patch() {
  return {"cursor-20px", symmetric_texture(), with_center_patch(symmetric_texture(), 20, 160), 0, 0.97876};
}

}  // namespace symphony::test_support
