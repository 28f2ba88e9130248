#include <array>
#include <stdexcept>

#include "helioflux/optics.hpp"
#include "helioflux/parallel.hpp"
#include "helioflux/rng.hpp"

namespace helioflux {

namespace {

struct FacetTransform {
  Mat3 rotation;  // facet-local to world
  Vec3 origin;    // facet center in world
  double width;
  double height;
  const FacetSurface* surface;
};

struct HeliostatPose {
  std::array<FacetTransform, kFacetCount> facets;
  std::array<double, kFacetCount> area_cdf;
};

HeliostatPose pose_heliostat(const HeliostatSpec& h, const HeliostatSurface& s, const Vec3& sun_dir,
                             const Vec3& aim_point) {
  const Vec3 normal = track_orientation(sun_dir, h.position, aim_point);
  const Mat3 frame = heliostat_frame(normal);
  HeliostatPose pose;
  double total = 0.0;
  for (std::size_t k = 0; k < kFacetCount; ++k) {
    const FacetSpec& f = h.facets[k];
    pose.facets[k] = {frame * f.canting_rotation, h.position + frame * f.center_offset, f.width, f.height,
                      &s.facets[k]};
    total += f.width * f.height;
    pose.area_cdf[k] = total;
  }
  for (double& c : pose.area_cdf) c /= total;
  pose.area_cdf.back() = 1.0;
  return pose;
}

MirrorSample sample_on(const FacetTransform& f, double u, double v) {
  const SurfacePoint sp = nurbs_eval(*f.surface, u, v, f.width, f.height);
  const Vec3 local{(u - 0.5) * f.width, (v - 0.5) * f.height, sp.z_mm * 1e-3};
  return {f.origin + f.rotation * local, f.rotation * sp.normal};
}

}  // namespace

MirrorSample mirror_sample(const HeliostatSpec& heliostat, const HeliostatSurface& surface, const Vec3& sun_dir,
                           const Vec3& aim_point, int facet, double u, double v) {
  const HeliostatPose pose = pose_heliostat(heliostat, surface, sun_dir, aim_point);
  return sample_on(pose.facets.at(static_cast<std::size_t>(facet)), u, v);
}

std::uint64_t accumulate_flux(const TraceRequest& req, std::vector<float>& raw) {
  if (req.heliostat == nullptr || req.surface == nullptr) throw std::invalid_argument("trace: missing heliostat");
  validate(req.geometry);
  const int res_x = resolution_x(req.geometry);
  const int res_y = resolution_y(req.geometry);
  const auto pixels = static_cast<std::size_t>(res_x) * static_cast<std::size_t>(res_y);
  if (raw.size() != pixels) throw GeometryMismatch("trace: accumulator size does not match geometry");

  const HeliostatPose pose = pose_heliostat(*req.heliostat, *req.surface, req.sun.direction, req.aim_point);
  const BuieSampler sunshape(SunshapeConfig{req.sun.csr});
  const int workers = std::max(1, req.threads);
  std::vector<std::vector<std::uint32_t>> partial(static_cast<std::size_t>(workers));
  std::vector<std::uint64_t> hits(static_cast<std::size_t>(workers), 0);

  parallel_chunks(req.n_rays, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    auto& grid = partial[w];
    grid.assign(pixels, 0u);
    std::uint64_t count = 0;
    for (std::size_t i = begin; i < end; ++i) {
      CounterRng rng(req.seed, req.first_ray + i);
      const double pick = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < kFacetCount && pick >= pose.area_cdf[k]) ++k;
      const double u = rng.uniform();
      const double v = rng.uniform();
      const MirrorSample m = sample_on(pose.facets[k], u, v);
      const Vec3 incoming =
          req.point_source ? -req.sun.direction : -perturb_direction(req.sun.direction, sunshape.sample(rng));
      if (dot(incoming, m.normal) >= 0.0) continue;
      const Vec3 out = reflect(incoming, m.normal);
      const auto hit = intersect(m.point, out, req.geometry);
      if (!hit) continue;
      ++grid[pixel_index(*hit, res_x, res_y)];
      ++count;
    }
    hits[w] = count;
  });

  std::uint64_t total = 0;
  for (std::size_t w = 0; w < partial.size(); ++w) {
    if (partial[w].empty()) continue;
    for (std::size_t i = 0; i < pixels; ++i) raw[i] += static_cast<float>(partial[w][i]);
    total += hits[w];
  }
  return total;
}

FluxImage trace_flux(const TraceRequest& req) {
  if (req.n_rays < 1) throw std::invalid_argument("trace: n_rays must be at least 1");
  FluxImage img = FluxImage::empty(req.geometry, req.n_rays);
  accumulate_flux(req, img.raw);
  img.renormalize();
  return img;
}

FluxImage trace_flux(const HeliostatSpec& heliostat, const HeliostatSurface& surface, const SunState& sun,
                     const FluxGeometry& geometry, const Vec3& aim_point, std::uint64_t n_rays, std::uint64_t seed,
                     int threads) {
  TraceRequest req;
  req.heliostat = &heliostat;
  req.surface = &surface;
  req.sun = sun;
  req.geometry = geometry;
  req.aim_point = aim_point;
  req.n_rays = n_rays;
  req.seed = seed;
  req.threads = threads;
  return trace_flux(req);
}

}  // namespace helioflux
