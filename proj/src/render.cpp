#include "helioflux/render.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace helioflux {

GrayImage to_gray(const std::vector<double>& normalized, int width, int height) {
  if (width <= 0 || height <= 0 || normalized.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("to_gray: grid size does not match dimensions");
  GrayImage g{width, height, std::vector<std::uint8_t>(normalized.size())};
  for (std::size_t i = 0; i < normalized.size(); ++i)
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(normalized[i], 0.0, 1.0)));
  return g;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  GrayImage g;
  int maxval = 0;
  in >> magic >> g.width >> g.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || g.width <= 0 || g.height <= 0)
    throw std::runtime_error("not an 8-bit binary PGM: " + path);
  in.get();
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  in.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path);
  return g;
}

std::array<std::uint8_t, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ch = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  return {ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)};
}

void write_heatmap_png(const std::string& path, const std::vector<double>& normalized, int width, int height) {
  if (width <= 0 || height <= 0 || normalized.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("write_heatmap_png: grid size does not match dimensions");
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const auto c = heat_color(normalized[i]);
    std::copy(c.begin(), c.end(), rows.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) row_ptrs[static_cast<std::size_t>(r)] = rows.data() + 3 * r * width;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void render_flux(const FluxImage& img, const std::string& path) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".pgm")
    write_pgm(path, to_gray(img.normalized, img.width, img.height));
  else if (ext == ".png")
    write_heatmap_png(path, img.normalized, img.width, img.height);
  else
    throw std::invalid_argument("render: output must end in .pgm or .png, got " + path);
}

}  // namespace helioflux
