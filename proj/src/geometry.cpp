#include "helioflux/geometry.hpp"

#include <algorithm>
#include <numbers>

namespace helioflux {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  const Vec3 axis = cross(from, to);
  const double s = norm(axis);
  const double c = dot(from, to);
  if (s < 1e-15) {
    if (c > 0.0) return Mat3::identity();
    // Antiparallel: rotate by pi about any axis perpendicular to `from`.
    Vec3 p = std::abs(from.e) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    p = normalize(p - from * dot(p, from));
    return Mat3{{2 * p.e * p.e - 1, 2 * p.e * p.n, 2 * p.e * p.u, 2 * p.n * p.e, 2 * p.n * p.n - 1,
                 2 * p.n * p.u, 2 * p.u * p.e, 2 * p.u * p.n, 2 * p.u * p.u - 1}};
  }
  // Rodrigues: R = I + [k]x + [k]x^2 (1 - c) / s^2, with k = axis (unnormalized).
  const Vec3 k = axis;
  const double f = (1.0 - c) / (s * s);
  const Mat3 kx{{0, -k.u, k.n, k.u, 0, -k.e, -k.n, k.e, 0}};
  const Mat3 kx2 = kx * kx;
  Mat3 r;
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = Mat3::identity().m[i] + kx.m[i] + kx2.m[i] * f;
  return r;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 p = r.transposed() * r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(p(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

std::array<FacetSpec, kFacetCount> default_facet_layout(double gap) {
  const double dx = 0.5 * (kFacetWidth + gap);
  const double dy = 0.5 * (kFacetHeight + gap);
  std::array<FacetSpec, kFacetCount> facets;
  const std::array<Vec3, kFacetCount> centers{Vec3{-dx, -dy, 0}, Vec3{dx, -dy, 0}, Vec3{-dx, dy, 0},
                                              Vec3{dx, dy, 0}};
  for (int k = 0; k < kFacetCount; ++k) facets[static_cast<std::size_t>(k)].center_offset = centers[static_cast<std::size_t>(k)];
  return facets;
}

HeliostatSpec make_heliostat(std::string id, const Vec3& position, double focal_distance, double gap) {
  HeliostatSpec spec;
  spec.id = std::move(id);
  spec.position = position;
  spec.focal_distance = focal_distance;
  spec.facets = default_facet_layout(gap);
  return cant_facets(std::move(spec));
}

void validate(const HeliostatSpec& spec) {
  if (!(spec.focal_distance >= kMinFocalDistance))
    throw std::invalid_argument("heliostat " + spec.id + ": focal distance below 65 m");
  for (const auto& f : spec.facets) {
    if (!(f.width > 0.0 && f.height > 0.0))
      throw std::invalid_argument("heliostat " + spec.id + ": facet extent must be positive");
    if (!is_rotation(f.canting_rotation))
      throw std::invalid_argument("heliostat " + spec.id + ": canting rotation is not orthonormal");
  }
}

Vec3 solar_vector(double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * kDeg;
  const double el = elevation_deg * kDeg;
  return {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
}

void azimuth_elevation(const Vec3& dir, double& azimuth_deg, double& elevation_deg) {
  const Vec3 d = normalize(dir);
  elevation_deg = std::asin(std::clamp(d.u, -1.0, 1.0)) / kDeg;
  double az = std::atan2(d.e, d.n) / kDeg;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  azimuth_deg = az;
}

Vec3 track_orientation(const Vec3& sun_dir, const Vec3& heliostat_pos, const Vec3& aim_point) {
  const Vec3 to_target = aim_point - heliostat_pos;
  if (norm(to_target) == 0.0) throw DegenerateGeometry("aim point coincides with heliostat position");
  const Vec3 bisector = sun_dir + normalize(to_target);
  if (norm(bisector) < 1e-12)
    throw DegenerateGeometry("sun and target directions are opposite; reflection is undefined");
  return normalize(bisector);
}

HeliostatSpec cant_facets(HeliostatSpec spec) {
  const bool flat = !std::isfinite(spec.focal_distance);
  const Vec3 axis{0, 0, 1};
  const Vec3 focus = axis * (flat ? 0.0 : spec.focal_distance);
  for (auto& facet : spec.facets) {
    if (flat) {
      facet.canting_rotation = Mat3::identity();
      continue;
    }
    const Vec3 to_focus = normalize(focus - facet.center_offset);
    const Vec3 facet_normal = normalize(axis + to_focus);
    facet.canting_rotation = rotation_between(axis, facet_normal);
  }
  return spec;
}

Mat3 heliostat_frame(const Vec3& normal) {
  Vec3 right = cross(Vec3{0, 0, 1}, normal);
  if (norm(right) < 1e-9) right = Vec3{1, 0, 0};
  right = normalize(right);
  const Vec3 up = cross(normal, right);
  return Mat3::from_columns(right, up, normal);
}

}  // namespace helioflux
