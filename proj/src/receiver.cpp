#include <algorithm>
#include <cmath>
#include <numbers>

#include "helioflux/optics.hpp"

namespace helioflux {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct ReceiverFrame {
  Vec3 axis_point;
  Vec3 side;    // local x
  Vec3 facing;  // local y, toward the field
  Vec3 axis;    // local z
};

ReceiverFrame receiver_frame(const CurvedReceiver& r) {
  const double az = r.facing_azimuth * kDeg;
  const double t = r.tilt * kDeg;
  ReceiverFrame f;
  f.facing = {std::sin(az) * std::cos(t), std::cos(az) * std::cos(t), -std::sin(t)};
  f.axis = {std::sin(az) * std::sin(t), std::cos(az) * std::sin(t), std::cos(t)};
  f.side = cross(f.axis, f.facing);
  f.axis_point = r.apex() + f.facing * r.radius;
  return f;
}

}  // namespace

std::optional<SurfaceHit> intersect_receiver(const Vec3& origin, const Vec3& dir, const CurvedReceiver& receiver) {
  const ReceiverFrame f = receiver_frame(receiver);
  const Vec3 rel = origin - f.axis_point;
  const double ox = dot(rel, f.side), oy = dot(rel, f.facing), oz = dot(rel, f.axis);
  const double dx = dot(dir, f.side), dy = dot(dir, f.facing), dz = dot(dir, f.axis);
  const double a = dx * dx + dy * dy;
  if (a < 1e-300) return std::nullopt;
  const double b = 2.0 * (ox * dx + oy * dy);
  const double c = ox * ox + oy * oy - receiver.radius * receiver.radius;
  const double disc = b * b - 4.0 * a * c;
  if (!(disc > 0.0)) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double roots[2] = {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)};
  const double half_open = 0.5 * receiver.opening_angle * kDeg;
  for (double t : roots) {
    if (!(t > 1e-9)) continue;
    const double x = ox + t * dx;
    const double y = oy + t * dy;
    const double z = oz + t * dz;
    const double alpha = std::atan2(x, -y);
    if (std::abs(alpha) > half_open) continue;
    const double hz = z / receiver.height_extent + 0.5;
    if (hz < 0.0 || hz > 1.0) continue;
    // Only the concave face, whose inward normal (-x, -y) / R opposes the ray.
    if (x * dx + y * dy <= 0.0) continue;
    return SurfaceHit{(alpha + half_open) / (2.0 * half_open), hz, t};
  }
  return std::nullopt;
}

std::optional<SurfaceHit> intersect_target(const Vec3& origin, const Vec3& dir, const TargetPlane& target) {
  const double denom = dot(dir, target.normal);
  if (!(denom < 0.0)) return std::nullopt;
  const double t = dot(target.center - origin, target.normal) / denom;
  if (!(t > 0.0)) return std::nullopt;
  const Vec3 p = origin + dir * t - target.center;
  const double s = dot(p, target.right()) / target.width + 0.5;
  const double h = dot(p, target.up) / target.height + 0.5;
  if (s < 0.0 || s > 1.0 || h < 0.0 || h > 1.0) return std::nullopt;
  return SurfaceHit{s, h, t};
}

std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& dir, const FluxGeometry& geometry) {
  if (const auto* t = std::get_if<TargetPlane>(&geometry)) return intersect_target(origin, dir, *t);
  return intersect_receiver(origin, dir, std::get<CurvedReceiver>(geometry));
}

std::size_t pixel_index(const SurfaceHit& hit, int res_x, int res_y) {
  const int col = std::clamp(static_cast<int>(hit.s * res_x), 0, res_x - 1);
  const int row = std::clamp(static_cast<int>((1.0 - hit.h) * res_y), 0, res_y - 1);
  return static_cast<std::size_t>(row) * static_cast<std::size_t>(res_x) + static_cast<std::size_t>(col);
}

Vec3 surface_point(const FluxGeometry& geometry, double s, double h) {
  if (const auto* t = std::get_if<TargetPlane>(&geometry))
    return t->center + t->right() * ((s - 0.5) * t->width) + t->up * ((h - 0.5) * t->height);
  const auto& r = std::get<CurvedReceiver>(geometry);
  const ReceiverFrame f = receiver_frame(r);
  const double alpha = (s - 0.5) * r.opening_angle * kDeg;
  return f.axis_point + f.side * (r.radius * std::sin(alpha)) - f.facing * (r.radius * std::cos(alpha)) +
         f.axis * ((h - 0.5) * r.height_extent);
}

Vec3 geometry_center(const FluxGeometry& geometry) { return surface_point(geometry, 0.5, 0.5); }

}  // namespace helioflux
