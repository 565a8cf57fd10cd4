#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntljb {

// Minimal RGB raster for rendering charts. Origin is the top-left corner;
// all drawing is clipped to the canvas.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

  Canvas(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255,
         std::uint8_t b = 255);

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  // Half-open box [x0, x1) x [y0, y1).
  void fill_rect(int x0, int y0, int x1, int y1, std::uint8_t r,
                 std::uint8_t g, std::uint8_t b);
  void hline(int x0, int x1, int y, std::uint8_t r, std::uint8_t g,
             std::uint8_t b);
  void vline(int x, int y0, int y1, std::uint8_t r, std::uint8_t g,
             std::uint8_t b);
};

// 8-bit RGB PNG with pinned compression level and filter choice, so equal
// pixels always serialize to equal bytes. Throws when the file cannot be
// written.
void write_png(const Canvas& canvas, const std::string& path);

}  // namespace ntljb
