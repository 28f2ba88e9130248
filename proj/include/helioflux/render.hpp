#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "helioflux/flux_image.hpp"

namespace helioflux {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, row 0 at the top
};

/// round(255 * v) per pixel; values are clamped to [0, 1] first.
GrayImage to_gray(const std::vector<double>& normalized, int width, int height);

void write_pgm(const std::string& path, const GrayImage& img);
/// Binary (P5) PGM with maxval 255.
GrayImage read_pgm(const std::string& path);

/// Black-red-yellow-white ramp.
std::array<std::uint8_t, 3> heat_color(double v);

/// False-color 8-bit RGB PNG of a normalized grid.
void write_heatmap_png(const std::string& path, const std::vector<double>& normalized, int width, int height);

/// Writes PGM or PNG by file extension (.pgm / .png).
void render_flux(const FluxImage& img, const std::string& path);

}  // namespace helioflux
