#pragma once

// Sprite-alphabet screenshots for the simulated environment. Every sprite is
// a deterministic block pattern, so rendered screens are identical on every
// platform and their pHash/SSIM relations are stable.

#include <cstdint>
#include <vector>

#include "symphony/image.hpp"

namespace symphony {

inline constexpr int kSpriteAlphabet = 32;

inline Rgb sprite_color(std::uint32_t seed) {
  // splitmix32-style scramble
  seed += 0x9e3779b9u;
  seed = (seed ^ (seed >> 16)) * 0x85ebca6bu;
  seed = (seed ^ (seed >> 13)) * 0xc2b2ae35u;
  seed ^= seed >> 16;
  return {static_cast<std::uint8_t>(seed), static_cast<std::uint8_t>(seed >> 8),
          static_cast<std::uint8_t>(seed >> 16)};
}

// Draws sprite `id` into the tile at (tx, ty). Sprites are 4x4 grids of
// colored blocks; id 0 is a flat background.
inline void draw_sprite(Image& img, int tx, int ty, int tile, int id) {
  const int x0 = tx * tile, y0 = ty * tile;
  if (id == 0) {
    img.fill_rect(x0, y0, x0 + tile, y0 + tile, {200, 200, 200});
    return;
  }
  const int block = std::max(1, tile / 4);
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx) {
      const auto c = sprite_color(static_cast<std::uint32_t>(id * 16 + by * 4 + bx));
      img.fill_rect(x0 + bx * block, y0 + by * block, x0 + (bx + 1) * block, y0 + (by + 1) * block, c);
    }
}

// Renders a row-major grid of sprite ids (cols x rows) at `tile` pixels each.
inline Image render_tiles(const std::vector<int>& grid, int cols, int rows, int tile) {
  Image img(cols * tile, rows * tile, Rgb{200, 200, 200});
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) draw_sprite(img, x, y, tile, grid[static_cast<std::size_t>(y) * cols + x]);
  return img;
}

}  // namespace symphony
