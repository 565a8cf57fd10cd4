#include "ntljb/pngio.hpp"

#include <png.h>

#include <cstdio>
#include <stdexcept>

namespace ntljb {

Canvas::Canvas(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : width(w), height(h) {
  if (w <= 0 || h <= 0)
    throw std::invalid_argument("Canvas: dimensions must be positive");
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
}

void Canvas::set(int x, int y, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
  if (x < 0 || x >= width || y < 0 || y >= height) return;
  const std::size_t i =
      (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3;
  rgb[i] = r;
  rgb[i + 1] = g;
  rgb[i + 2] = b;
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, std::uint8_t r,
                       std::uint8_t g, std::uint8_t b) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y, r, g, b);
}

void Canvas::hline(int x0, int x1, int y, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  for (int x = x0; x <= x1; ++x) set(x, y, r, g, b);
}

void Canvas::vline(int x, int y0, int y1, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  for (int y = y0; y <= y1; ++y) set(x, y, r, g, b);
}

void write_png(const Canvas& canvas, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw std::runtime_error("write_png: libpng initialization failed");
  }
  // libpng reports errors through longjmp; everything that needs cleanup
  // lives outside this frame's automatic storage.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw std::runtime_error("write_png: encoding failed for " + path);
  }

  png_init_io(png, f);
  // Pinned encoder settings: any change here would silently break the
  // byte-identical re-export guarantee the tests rely on.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width),
               static_cast<png_uint_32>(canvas.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < canvas.height; ++y)
    png_write_row(png, const_cast<png_bytep>(canvas.rgb.data() +
                                             static_cast<std::size_t>(y) *
                                                 canvas.width * 3));
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(f) != 0)
    throw std::runtime_error("write_png: close failed for " + path);
}

}  // namespace ntljb
