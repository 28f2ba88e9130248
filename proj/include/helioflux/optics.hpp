#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "helioflux/flux_image.hpp"
#include "helioflux/geometry.hpp"
#include "helioflux/nurbs.hpp"
#include "helioflux/sunshape.hpp"

namespace helioflux {

/// Image coordinates in [0, 1]^2: s along the width (left to right as seen
/// from the field), h along the height (bottom to top).
struct SurfaceHit {
  double s = 0.0;
  double h = 0.0;
  double distance = 0.0;
};

/// Nearest front-face hit on the cylindrical section. Rays parallel to the
/// axis and tangent rays (zero discriminant) miss.
std::optional<SurfaceHit> intersect_receiver(const Vec3& origin, const Vec3& dir, const CurvedReceiver& receiver);

/// Front-face hit inside the plane's rectangle.
std::optional<SurfaceHit> intersect_target(const Vec3& origin, const Vec3& dir, const TargetPlane& target);

std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& dir, const FluxGeometry& geometry);

/// Row-major pixel index of a hit; row 0 is the top edge.
std::size_t pixel_index(const SurfaceHit& hit, int res_x, int res_y);

/// Point on the geometry at image coordinates (s, h).
Vec3 surface_point(const FluxGeometry& geometry, double s, double h);

/// Default aim point: target center or receiver apex.
Vec3 geometry_center(const FluxGeometry& geometry);

struct TraceRequest {
  const HeliostatSpec* heliostat = nullptr;
  const HeliostatSurface* surface = nullptr;
  SunState sun;
  FluxGeometry geometry;
  Vec3 aim_point;
  std::uint64_t n_rays = 0;
  std::uint64_t seed = 0;
  /// Global index of the first ray; ray i draws from CounterRng(seed, first_ray + i).
  std::uint64_t first_ray = 0;
  int threads = 1;
  /// Collimated light without sunshape; used to validate the specular geometry.
  bool point_source = false;
};

/// Monte-Carlo flux of one heliostat. Each ray samples a point uniformly over
/// the mirror area, takes the NURBS normal composed with canting and tracking,
/// perturbs the incoming sun direction by the Buie sunshape, reflects and
/// bins the hit. Raw counts are identical for any thread count.
FluxImage trace_flux(const TraceRequest& request);

/// Adds the hits of `request` to `raw` (row-major, geometry resolution);
/// returns the number of hits.
std::uint64_t accumulate_flux(const TraceRequest& request, std::vector<float>& raw);

FluxImage trace_flux(const HeliostatSpec& heliostat, const HeliostatSurface& surface, const SunState& sun,
                     const FluxGeometry& geometry, const Vec3& aim_point, std::uint64_t n_rays, std::uint64_t seed,
                     int threads = 1);

/// World-space reflection state for one sampled mirror point.
struct MirrorSample {
  Vec3 point;
  Vec3 normal;
};

/// Mirror point at facet-local parameters (u, v) for a heliostat tracking
/// `aim_point`; exposed for tests of the reflection geometry.
MirrorSample mirror_sample(const HeliostatSpec& heliostat, const HeliostatSurface& surface, const Vec3& sun_dir,
                           const Vec3& aim_point, int facet, double u, double v);

}  // namespace helioflux
