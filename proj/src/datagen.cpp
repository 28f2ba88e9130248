#include "helioflux/datagen.hpp"

#include "helioflux/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace helioflux {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double grid_coord(int i) { return static_cast<double>(i) / (kControlGrid - 1); }

void synth_facet(const SurfacePrior& p, FacetSurface& f, Rng& rng, double width, double height) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  // mrad slope times metres across the facet gives mm.
  const double slope_x = p.canting_tilt_sigma * gauss(rng);
  const double slope_y = p.canting_tilt_sigma * gauss(rng);
  const double bow_x = p.bow_amp_sigma * gauss(rng);
  const double bow_y = p.bow_amp_sigma * gauss(rng);
  const double wave_amp = p.wave_amp_sigma * gauss(rng);
  std::uniform_real_distribution<double> freq_dist(p.wave_freq_min, p.wave_freq_max);
  const double freq = p.wave_freq_max > p.wave_freq_min ? freq_dist(rng) : p.wave_freq_min;
  const double dir = 2.0 * std::numbers::pi * uniform01(rng);
  const double phase = 2.0 * std::numbers::pi * uniform01(rng);
  const double kx = std::cos(dir);
  const double ky = std::sin(dir);

  for (int i = 0; i < kControlGrid; ++i) {
    for (int j = 0; j < kControlGrid; ++j) {
      const double x = grid_coord(i);
      const double y = grid_coord(j);
      const double bx = 2.0 * x - 1.0;
      const double by = 2.0 * y - 1.0;
      double z = slope_x * (x - 0.5) * width + slope_y * (y - 0.5) * height;
      z += bow_x * bx * bx + bow_y * by * by;
      z += wave_amp * std::sin(2.0 * std::numbers::pi * freq * (x * kx + y * ky) + phase);
      z += p.noise_sigma * gauss(rng);
      f.at(i, j) = std::clamp(z, -kMaxDeviationMm, kMaxDeviationMm);
    }
  }
}

}  // namespace

void validate(const SurfacePrior& p) {
  const double vals[] = {p.canting_tilt_sigma, p.bow_amp_sigma, p.wave_amp_sigma, p.noise_sigma,
                         p.wave_freq_min,      p.wave_freq_max};
  for (double v : vals)
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("surface prior: parameters must be finite and >= 0");
  if (p.wave_freq_max < p.wave_freq_min) throw std::invalid_argument("surface prior: wave_freq_range inverted");
}

HeliostatSurface synth_surface(const SurfacePrior& prior, Rng& rng) {
  validate(prior);
  HeliostatSurface s;
  for (auto& f : s.facets) synth_facet(prior, f, rng, kFacetWidth, kFacetHeight);
  return s;
}

HeliostatSurface augment_rotate180(const HeliostatSurface& s) {
  HeliostatSurface out = s;
  for (int k = 0; k < kFacetCount; ++k) {
    const FacetSurface& src = s.facets[static_cast<std::size_t>(kFacetCount - 1 - k)];
    FacetSurface& dst = out.facets[static_cast<std::size_t>(k)];
    dst.knots_u = src.knots_u;
    dst.knots_v = src.knots_v;
    for (int i = 0; i < kControlGrid; ++i)
      for (int j = 0; j < kControlGrid; ++j) dst.at(i, j) = src.at(kControlGrid - 1 - i, kControlGrid - 1 - j);
  }
  return out;
}

HeliostatSurface augment_blend(const HeliostatSurface& a, const HeliostatSurface& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("augment_blend: lambda outside [0, 1]");
  HeliostatSurface out = a;
  for (std::size_t k = 0; k < out.facets.size(); ++k)
    for (std::size_t n = 0; n < out.facets[k].control_z.size(); ++n)
      out.facets[k].control_z[n] = (1.0 - lambda) * a.facets[k].control_z[n] + lambda * b.facets[k].control_z[n];
  return out;
}

double max_solar_elevation(double latitude_deg, double azimuth_deg) {
  // Declination needed for a sun at (az, el):
  // sin(dec) = sin(lat) sin(el) + cos(lat) cos(el) cos(az).
  const double lat = latitude_deg * kDeg;
  const double ca = std::cos(azimuth_deg * kDeg);
  const double bound = std::sin(kMaxDeclination * kDeg);
  auto feasible = [&](double el_deg) {
    const double el = el_deg * kDeg;
    const double s = std::sin(lat) * std::sin(el) + std::cos(lat) * std::cos(el) * ca;
    return std::abs(s) <= bound;
  };
  constexpr double step = 0.01;
  for (double el = 90.0; el >= 0.0; el -= step) {
    if (!feasible(el)) continue;
    if (el == 90.0) return 90.0;
    double lo = el;
    double hi = std::min(90.0, el + step);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
  }
  return -1.0;
}

std::vector<SunNode> sun_grid(const SiteLocation& location, double az_step, double el_step) {
  if (!(az_step > 0.0) || !(el_step > 0.0)) throw std::invalid_argument("sun_grid: steps must be positive");
  std::vector<SunNode> nodes;
  for (int a = 0; a * az_step < 360.0 - 1e-9; ++a) {
    const double az = a * az_step;
    const double max_el = max_solar_elevation(location.latitude, az);
    for (int e = 1; e * el_step < 90.0 - 1e-9; ++e) {
      const double el = e * el_step;
      if (el > max_el) break;
      nodes.push_back({az, el, solar_vector(az, el)});
    }
  }
  if (nodes.empty()) throw std::invalid_argument("sun_grid: no feasible sun positions");
  return nodes;
}

std::vector<SunNode> summer_nodes(const std::vector<SunNode>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("summer_nodes: empty grid");
  std::vector<double> el;
  el.reserve(nodes.size());
  for (const auto& n : nodes) el.push_back(n.elevation);
  std::sort(el.begin(), el.end());
  const std::size_t m = el.size();
  const double median = m % 2 ? el[m / 2] : 0.5 * (el[m / 2 - 1] + el[m / 2]);
  std::vector<SunNode> out;
  for (const auto& n : nodes)
    if (n.elevation > median) out.push_back(n);
  if (out.empty()) throw std::invalid_argument("summer_nodes: no node above median elevation");
  return out;
}

Vec3 scatter_aim(const Vec3& center, const Vec3& right, const Vec3& up, Rng& rng, double radius) {
  const double r = radius * std::sqrt(uniform01(rng));
  const double t = 2.0 * std::numbers::pi * uniform01(rng);
  return center + right * (r * std::cos(t)) + up * (r * std::sin(t));
}

Vec3 scatter_aim(const TargetPlane& target, Rng& rng, double radius) {
  return scatter_aim(target.center, normalize(target.right()), normalize(target.up), rng, radius);
}

void validate(const DatasetSample& s) {
  validate(s.heliostat);
  validate(s.truth);
  if (s.observations.empty() || s.observations.size() > static_cast<std::size_t>(kMaxObservations))
    throw std::invalid_argument("dataset sample: needs 1..8 observations");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<TargetPlane> default_targets() {
  TargetPlane low;
  low.center = {0, 0, 36};
  TargetPlane high;
  high.center = {0, 0, 43};
  return {low, high};
}

std::vector<Split> assign_splits(const std::vector<HeliostatSpec>& field, const std::array<double, 3>& fractions,
                                 std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (!(total > 0.0) || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
    throw std::invalid_argument("split fractions must be nonnegative with positive sum");
  std::vector<std::size_t> order(field.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5EED5B11ull));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(field.size());
  const auto n_train = static_cast<std::size_t>(std::lround(n * fractions[0] / total));
  const auto n_val = static_cast<std::size_t>(std::lround(n * fractions[1] / total));
  std::vector<Split> out(field.size(), Split::kTest);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r < n_train)
      out[order[r]] = Split::kTrain;
    else if (r < n_train + n_val)
      out[order[r]] = Split::kVal;
  }
  return out;
}

DatasetSample make_sample(const HeliostatSpec& heliostat, const std::vector<SunNode>& suns,
                          const GenerationConfig& config, std::uint64_t seed, int index) {
  if (suns.empty()) throw std::invalid_argument("make_sample: empty sun grid");
  if (config.targets.empty()) throw std::invalid_argument("make_sample: no targets");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));

  DatasetSample s;
  s.heliostat = heliostat;
  s.truth = synth_surface(config.prior, rng);
  if (uniform01(rng) < config.p_blend) {
    const HeliostatSurface other = synth_surface(config.prior, rng);
    s.truth = augment_blend(s.truth, other, uniform01(rng));
  }
  if (uniform01(rng) < config.p_rotate) s.truth = augment_rotate180(s.truth);

  std::uniform_int_distribution<int> n_obs(config.min_observations, config.max_observations);
  std::uniform_int_distribution<std::size_t> pick_sun(0, suns.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_target(0, config.targets.size() - 1);
  const int count = n_obs(rng);
  for (int o = 0; o < count; ++o) {
    Observation obs;
    obs.sun.direction = suns[pick_sun(rng)].direction;
    obs.sun.csr = config.csr_max * uniform01(rng);
    const TargetPlane& target = config.targets[pick_target(rng)];
    obs.aim_point = scatter_aim(target, rng, config.aim_radius);
    const std::uint64_t trace_seed = rng();
    obs.flux = trace_flux(s.heliostat, s.truth, obs.sun, target, obs.aim_point, config.rays_per_image, trace_seed);
    s.observations.push_back(std::move(obs));
  }
  return s;
}

std::vector<int> LoadedDataset::indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace helioflux
