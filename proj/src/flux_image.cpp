#include "helioflux/flux_image.hpp"

#include <algorithm>
#include <fstream>

#include "helioflux/binary_io.hpp"

namespace helioflux {

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.e, v.n, v.u}); }

Vec3 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw io::FormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void validate(const TargetPlane& t) {
  if (std::abs(norm(t.normal) - 1.0) > 1e-9 || std::abs(norm(t.up) - 1.0) > 1e-9)
    throw std::invalid_argument("target plane: normal and up must be unit vectors");
  if (std::abs(dot(t.normal, t.up)) > 1e-9) throw std::invalid_argument("target plane: up must be perpendicular to normal");
  if (!(t.width > 0.0 && t.height > 0.0)) throw std::invalid_argument("target plane: extent must be positive");
  if (t.res_x < 16 || t.res_y < 16) throw std::invalid_argument("target plane: resolution must be at least 16x16");
}

void validate(const CurvedReceiver& r) {
  if (!(r.radius > 0.0)) throw std::invalid_argument("receiver: radius must be positive");
  if (!(r.opening_angle > 0.0 && r.opening_angle < 180.0))
    throw std::invalid_argument("receiver: opening angle must lie in (0, 180)");
  if (!(r.height_extent > 0.0)) throw std::invalid_argument("receiver: height extent must be positive");
  if (r.res_x < 16 || r.res_y < 16) throw std::invalid_argument("receiver: resolution must be at least 16x16");
}

void validate(const FluxGeometry& g) {
  std::visit([](const auto& x) { validate(x); }, g);
}

int resolution_x(const FluxGeometry& g) {
  return std::visit([](const auto& x) { return x.res_x; }, g);
}
int resolution_y(const FluxGeometry& g) {
  return std::visit([](const auto& x) { return x.res_y; }, g);
}

nlohmann::json to_json(const FluxGeometry& g) {
  if (const auto* t = std::get_if<TargetPlane>(&g)) {
    return {{"type", "target_plane"},
            {"center", vec_json(t->center)},
            {"normal", vec_json(t->normal)},
            {"up", vec_json(t->up)},
            {"width", t->width},
            {"height", t->height},
            {"res_x", t->res_x},
            {"res_y", t->res_y}};
  }
  const auto& r = std::get<CurvedReceiver>(g);
  return {{"type", "curved_receiver"},
          {"tower_base", vec_json(r.tower_base)},
          {"apex_height", r.apex_height},
          {"radius", r.radius},
          {"opening_angle", r.opening_angle},
          {"tilt", r.tilt},
          {"height_extent", r.height_extent},
          {"facing_azimuth", r.facing_azimuth},
          {"res_x", r.res_x},
          {"res_y", r.res_y}};
}

FluxGeometry geometry_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "target_plane") {
    TargetPlane t;
    t.center = json_vec(j.at("center"));
    t.normal = json_vec(j.at("normal"));
    t.up = json_vec(j.at("up"));
    t.width = j.at("width").get<double>();
    t.height = j.at("height").get<double>();
    t.res_x = j.at("res_x").get<int>();
    t.res_y = j.at("res_y").get<int>();
    return t;
  }
  if (type == "curved_receiver") {
    CurvedReceiver r;
    r.tower_base = json_vec(j.at("tower_base"));
    r.apex_height = j.at("apex_height").get<double>();
    r.radius = j.at("radius").get<double>();
    r.opening_angle = j.at("opening_angle").get<double>();
    r.tilt = j.at("tilt").get<double>();
    r.height_extent = j.at("height_extent").get<double>();
    r.facing_azimuth = j.at("facing_azimuth").get<double>();
    r.res_x = j.at("res_x").get<int>();
    r.res_y = j.at("res_y").get<int>();
    return r;
  }
  throw io::FormatError("unknown geometry type: " + type);
}

FluxImage FluxImage::empty(const FluxGeometry& g, std::uint64_t rays) {
  FluxImage img;
  img.width = resolution_x(g);
  img.height = resolution_y(g);
  img.ray_count = rays;
  img.geometry = g;
  const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.raw.assign(n, 0.0f);
  img.normalized.assign(n, 0.0);
  img.no_hits = true;
  return img;
}

void normalize_max(std::vector<double>& grid) {
  double peak = 0.0;
  for (double v : grid) peak = std::max(peak, v);
  if (peak <= 0.0) {
    std::fill(grid.begin(), grid.end(), 0.0);
    return;
  }
  for (double& v : grid) v /= peak;
}

void FluxImage::renormalize() {
  normalized.assign(raw.begin(), raw.end());
  double peak = 0.0;
  for (float v : raw) peak = std::max(peak, static_cast<double>(v));
  no_hits = !(peak > 0.0);
  normalize_max(normalized);
}

double FluxImage::total_raw() const {
  double s = 0.0;
  for (float v : raw) s += v;
  return s;
}

FluxImage superpose(const std::vector<FluxImage>& images) {
  if (images.empty()) throw std::invalid_argument("superpose: no images");
  FluxImage out = images.front();
  for (std::size_t k = 1; k < images.size(); ++k) {
    const FluxImage& img = images[k];
    if (img.width != out.width || img.height != out.height || !(img.geometry == out.geometry))
      throw GeometryMismatch("superpose: images differ in geometry or resolution");
    for (std::size_t i = 0; i < out.raw.size(); ++i) out.raw[i] += img.raw[i];
    out.ray_count += img.ray_count;
  }
  out.renormalize();
  return out;
}

void write_flux(std::ostream& out, const FluxImage& img) {
  io::write_magic(out, "FLUX");
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.width));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(img.height));
  io::write_le<std::uint64_t>(out, img.ray_count);
  for (float v : img.raw) io::write_le<float>(out, v);
  io::write_blob(out, to_json(img.geometry).dump());
}

FluxImage read_flux(std::istream& in) {
  io::expect_magic(in, "FLUX");
  FluxImage img;
  img.width = static_cast<int>(io::read_le<std::uint32_t>(in));
  img.height = static_cast<int>(io::read_le<std::uint32_t>(in));
  if (img.width <= 0 || img.height <= 0 || img.width > 1 << 14 || img.height > 1 << 14)
    throw io::FormatError("flux image: implausible resolution");
  img.ray_count = io::read_le<std::uint64_t>(in);
  img.raw.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (float& v : img.raw) v = io::read_le<float>(in);
  img.geometry = geometry_from_json(nlohmann::json::parse(io::read_blob(in)));
  if (resolution_x(img.geometry) != img.width || resolution_y(img.geometry) != img.height)
    throw io::FormatError("flux image: header resolution disagrees with geometry");
  img.renormalize();
  return img;
}

void write_flux_file(const std::string& path, const FluxImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_flux(out, img);
  if (!out) throw std::runtime_error("write failed: " + path);
}

FluxImage read_flux_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return read_flux(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace helioflux
