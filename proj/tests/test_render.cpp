#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helioflux/optics.hpp"
#include "helioflux/rng.hpp"
#include "helioflux/render.hpp"

using namespace helioflux;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "helioflux_test_render";
  fs::create_directories(dir);
  return dir / name;
}

FluxImage image_from(const std::vector<float>& raw, int w, int h) {
  TargetPlane t;
  t.res_x = w;
  t.res_y = h;
  FluxImage img = FluxImage::empty(t);
  img.raw = raw;
  img.renormalize();
  return img;
}

}  // namespace

TEST(Render, ZeroFluxIsBlack) {
  const FluxImage img = image_from(std::vector<float>(12, 0.0f), 4, 3);
  const auto path = scratch("zero.pgm");
  render_flux(img, path.string());
  const GrayImage g = read_pgm(path.string());
  EXPECT_EQ(g.width, 4);
  EXPECT_EQ(g.height, 3);
  for (auto p : g.pixels) EXPECT_EQ(p, 0);
}

TEST(Render, MaxPixelIs255) {
  std::vector<float> raw(64 * 64);
  Rng rng(3);
  for (auto& v : raw) v = static_cast<float>(uniform01(rng) * 10.0);
  raw[1234] = 50.0f;
  const FluxImage img = image_from(raw, 64, 64);
  const GrayImage g = to_gray(img.normalized, 64, 64);
  EXPECT_EQ(g.pixels[1234], 255);
  EXPECT_EQ(*std::max_element(g.pixels.begin(), g.pixels.end()), 255);
}

TEST(Render, PgmRoundTripIsBitExact) {
  Rng rng(11);
  std::vector<double> v(37 * 23);
  for (auto& x : v) x = uniform01(rng);
  const auto path = scratch("rt.pgm");
  write_pgm(path.string(), to_gray(v, 37, 23));
  const GrayImage g = read_pgm(path.string());
  ASSERT_EQ(g.pixels.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(g.pixels[i], static_cast<int>(std::lround(255.0 * v[i])));
}

TEST(Render, ToGrayClampsAndRounds) {
  const GrayImage g = to_gray({-0.5, 0.0, 0.5 / 255.0, 0.499, 1.0, 2.0}, 6, 1);
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 0, 1, 127, 255, 255}));
}

TEST(Render, HeatRampEndpoints) {
  EXPECT_EQ(heat_color(0.0), (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(heat_color(1.0), (std::array<std::uint8_t, 3>{255, 255, 255}));
  const auto mid = heat_color(1.0 / 3.0);
  EXPECT_EQ(mid[0], 255);
  EXPECT_EQ(mid[1], 0);
}

TEST(Render, PngHasSignatureAndSize) {
  std::vector<double> v(16 * 8, 0.25);
  const auto path = scratch("h.png");
  write_heatmap_png(path.string(), v, 16, 8);
  std::ifstream in(path, std::ios::binary);
  unsigned char header[24] = {};
  in.read(reinterpret_cast<char*>(header), 24);
  ASSERT_TRUE(in);
  EXPECT_EQ(header[1], 'P');
  EXPECT_EQ(header[2], 'N');
  EXPECT_EQ(header[3], 'G');
  const auto be32 = [&](int o) { return (header[o] << 24) | (header[o + 1] << 16) | (header[o + 2] << 8) | header[o + 3]; };
  EXPECT_EQ(be32(16), 16);
  EXPECT_EQ(be32(20), 8);
}

TEST(Render, RejectsBadInput) {
  EXPECT_THROW(to_gray({0.1, 0.2}, 3, 1), std::invalid_argument);
  const FluxImage img = image_from(std::vector<float>(4, 1.0f), 2, 2);
  EXPECT_THROW(render_flux(img, scratch("x.bmp").string()), std::invalid_argument);
  const auto bad = scratch("bad.pgm");
  std::ofstream(bad) << "P2\n2 2\n255\n0 0 0 0\n";
  EXPECT_THROW(read_pgm(bad.string()), std::runtime_error);
}
