#include "helioflux/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace helioflux {

namespace {

double uniform_in(Rng& rng, std::pair<double, double> r) { return r.first + (r.second - r.first) * uniform01(rng); }

void check_shape(const Grid& img, int w, int h) {
  if (w < 1 || h < 1 || img.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
    throw std::invalid_argument("flux grid does not match its dimensions");
}

/// Bilinear sample at continuous pixel coordinates; `clamp_edges` replicates
/// border pixels, otherwise outside reads as zero.
double bilinear(const Grid& img, int w, int h, double x, double y, bool clamp_edges) {
  if (clamp_edges) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  }
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double tx = x - fx, ty = y - fy;
  auto at = [&](int xi, int yi) {
    if (xi < 0 || yi < 0 || xi >= w || yi >= h) return 0.0;
    return img[static_cast<std::size_t>(yi) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xi)];
  };
  double v = (1 - tx) * (1 - ty) * at(x0, y0);
  if (tx != 0.0) v += tx * (1 - ty) * at(x0 + 1, y0);
  if (ty != 0.0) v += (1 - tx) * ty * at(x0, y0 + 1);
  if (tx != 0.0 && ty != 0.0) v += tx * ty * at(x0 + 1, y0 + 1);
  return v;
}

std::pair<int, int> grid_dims(const FluxImage& f) { return {f.width, f.height}; }

}  // namespace

RandomizationConfig RandomizationConfig::none() {
  RandomizationConfig c;
  c.dropout = c.position_jitter = c.label_noise = false;
  c.clamp = c.background = c.contrast = c.crop = c.deform = c.smooth = false;
  c.apply_prob = 0.0;
  return c;
}

void validate(const RandomizationConfig& c) {
  if (!(c.apply_prob >= 0.0 && c.apply_prob <= 1.0)) throw std::invalid_argument("apply_prob must lie in [0, 1]");
  const double mags[] = {c.heliostat_jitter_sigma, c.sun_jitter_sigma, c.surface_noise_sigma,
                         c.background_noise_max,   c.deform_amp,       c.clamp_range.first,
                         c.contrast_gamma_range.first};
  for (double m : mags)
    if (!(m >= 0.0) || !std::isfinite(m)) throw std::invalid_argument("randomization magnitudes must be >= 0");
  if (c.clamp_range.first > c.clamp_range.second || c.clamp_range.second > 1.0 || c.clamp_range.first <= 0.0)
    throw std::invalid_argument("clamp_range must satisfy 0 < lo <= hi <= 1");
  if (c.contrast_gamma_range.first > c.contrast_gamma_range.second || c.contrast_gamma_range.first <= 0.0)
    throw std::invalid_argument("contrast_gamma_range must satisfy 0 < lo <= hi");
  if (c.smooth_kernel < 1) throw std::invalid_argument("smooth_kernel must be >= 1");
}

nlohmann::json to_json(const RandomizationConfig& c) {
  return {{"enable",
           {{"dropout", c.dropout},
            {"position_jitter", c.position_jitter},
            {"label_noise", c.label_noise},
            {"clamp", c.clamp},
            {"background", c.background},
            {"contrast", c.contrast},
            {"crop", c.crop},
            {"deform", c.deform},
            {"smooth", c.smooth}}},
          {"clamp_range", {c.clamp_range.first, c.clamp_range.second}},
          {"heliostat_jitter_sigma", c.heliostat_jitter_sigma},
          {"sun_jitter_sigma", c.sun_jitter_sigma},
          {"surface_noise_sigma", c.surface_noise_sigma},
          {"background_noise_max", c.background_noise_max},
          {"contrast_gamma_range", {c.contrast_gamma_range.first, c.contrast_gamma_range.second}},
          {"deform_amp", c.deform_amp},
          {"smooth_kernel", c.smooth_kernel},
          {"apply_prob", c.apply_prob}};
}

RandomizationConfig randomization_from_json(const nlohmann::json& j) {
  RandomizationConfig c;
  if (j.contains("enable")) {
    const auto& e = j.at("enable");
    c.dropout = e.value("dropout", c.dropout);
    c.position_jitter = e.value("position_jitter", c.position_jitter);
    c.label_noise = e.value("label_noise", c.label_noise);
    c.clamp = e.value("clamp", c.clamp);
    c.background = e.value("background", c.background);
    c.contrast = e.value("contrast", c.contrast);
    c.crop = e.value("crop", c.crop);
    c.deform = e.value("deform", c.deform);
    c.smooth = e.value("smooth", c.smooth);
  }
  auto range = [&](const char* key, std::pair<double, double>& r) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument(std::string(key) + " must have two entries");
    r = {v[0], v[1]};
  };
  range("clamp_range", c.clamp_range);
  range("contrast_gamma_range", c.contrast_gamma_range);
  c.heliostat_jitter_sigma = j.value("heliostat_jitter_sigma", c.heliostat_jitter_sigma);
  c.sun_jitter_sigma = j.value("sun_jitter_sigma", c.sun_jitter_sigma);
  c.surface_noise_sigma = j.value("surface_noise_sigma", c.surface_noise_sigma);
  c.background_noise_max = j.value("background_noise_max", c.background_noise_max);
  c.deform_amp = j.value("deform_amp", c.deform_amp);
  c.smooth_kernel = j.value("smooth_kernel", c.smooth_kernel);
  c.apply_prob = j.value("apply_prob", c.apply_prob);
  validate(c);
  return c;
}

void renormalize(Grid& g) {
  const double m = g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
  if (m > 0.0)
    for (double& v : g) v /= m;
}

Grid clamp_overexpose(const Grid& img, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("clamp threshold must lie in (0, 1]");
  Grid out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::min(img[i], t) / t;
  renormalize(out);
  return out;
}

Grid clamp_overexpose(const Grid& img, Rng& rng, std::pair<double, double> range) {
  return clamp_overexpose(img, uniform_in(rng, range));
}

Grid background_noise(const Grid& img, double level, Rng& rng) {
  if (!(level >= 0.0)) throw std::invalid_argument("noise level must be >= 0");
  Grid out = img;
  if (level == 0.0) return out;
  for (double& v : out) v += level * uniform01(rng);
  renormalize(out);
  return out;
}

Grid background_noise(const Grid& img, Rng& rng, double max_level) {
  return background_noise(img, max_level * uniform01(rng), rng);
}

Grid adjust_contrast(const Grid& img, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  Grid out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = gamma == 1.0 ? img[i] : std::pow(img[i], gamma);
  renormalize(out);
  return out;
}

Grid adjust_contrast(const Grid& img, Rng& rng, std::pair<double, double> gamma_range) {
  return adjust_contrast(img, uniform_in(rng, gamma_range));
}

Grid crop_rescale(const Grid& img, int w, int h, unsigned edges) {
  check_shape(img, w, h);
  if (edges == 0) return img;
  const int left = (edges & kCropLeft) ? 1 : 0;
  const int right = (edges & kCropRight) ? 1 : 0;
  const int top = (edges & kCropTop) ? 1 : 0;
  const int bottom = (edges & kCropBottom) ? 1 : 0;
  const int cw = w - left - right;
  const int ch = h - top - bottom;
  if (cw < 2 || ch < 2) throw std::invalid_argument("crop_rescale: image too small");
  Grid out(img.size());
  const double sx = static_cast<double>(cw) / w;
  const double sy = static_cast<double>(ch) / h;
  for (int y = 0; y < h; ++y) {
    const double ys = top + std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ch - 1));
    for (int x = 0; x < w; ++x) {
      const double xs = left + std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(cw - 1));
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          bilinear(img, w, h, xs, ys, true);
    }
  }
  renormalize(out);
  return out;
}

Grid crop_rescale(const Grid& img, int w, int h, Rng& rng) {
  const unsigned edges = 1u + static_cast<unsigned>(uniform01(rng) * 15.0);
  return crop_rescale(img, w, h, std::min(edges, 15u));
}

Grid deform_flux(const Grid& img, int w, int h, const Displacement& d) {
  check_shape(img, w, h);
  Grid out(img.size());
  for (int y = 0; y < h; ++y) {
    const double ny = h > 1 ? 2.0 * y / (h - 1) - 1.0 : 0.0;
    for (int x = 0; x < w; ++x) {
      const double nx = w > 1 ? 2.0 * x / (w - 1) - 1.0 : 0.0;
      const double dx = d.dx[0] + d.dx[1] * nx + d.dx[2] * ny;
      const double dy = d.dy[0] + d.dy[1] * nx + d.dy[2] * ny;
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          bilinear(img, w, h, x + dx, y + dy, false);
    }
  }
  renormalize(out);
  return out;
}

Grid deform_flux(const Grid& img, int w, int h, Rng& rng, double amp) {
  if (!(amp >= 0.0)) throw std::invalid_argument("deform amplitude must be >= 0");
  Displacement d;
  auto draw = [&](double (&c)[3]) {
    double l1 = 0.0;
    for (double& v : c) {
      v = 2.0 * uniform01(rng) - 1.0;
      l1 += std::abs(v);
    }
    // |c0 + c1 x + c2 y| <= l1 on the unit square; scale so the bound is amp.
    for (double& v : c) v = l1 > 0.0 ? v * amp / l1 : 0.0;
  };
  draw(d.dx);
  draw(d.dy);
  return deform_flux(img, w, h, d);
}

Grid smooth_flux(const Grid& img, int w, int h, int k) {
  check_shape(img, w, h);
  if (k < 1) throw std::invalid_argument("smooth kernel must be >= 1");
  if (k == 1) return img;
  std::vector<double> weights(static_cast<std::size_t>(2 * k - 1));
  for (int d = -(k - 1); d <= k - 1; ++d)
    weights[static_cast<std::size_t>(d + k - 1)] = static_cast<double>(k - std::abs(d)) / (k * k);
  Grid tmp(img.size(), 0.0), out(img.size(), 0.0);
  const auto W = static_cast<std::size_t>(w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -(k - 1); d <= k - 1; ++d) {
        const int xi = x + d;
        if (xi >= 0 && xi < w) s += weights[static_cast<std::size_t>(d + k - 1)] * img[y * W + xi];
      }
      tmp[y * W + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -(k - 1); d <= k - 1; ++d) {
        const int yi = y + d;
        if (yi >= 0 && yi < h) s += weights[static_cast<std::size_t>(d + k - 1)] * tmp[yi * W + x];
      }
      out[y * W + x] = s;
    }
  renormalize(out);
  return out;
}

DatasetSample randomize_sample(const DatasetSample& sample, const RandomizationConfig& c, Rng& rng) {
  validate(c);
  DatasetSample s = sample;
  const double p = c.apply_prob;
  auto fire = [&](bool enabled) { return enabled && uniform01(rng) < p; };

  if (c.dropout && s.observations.size() > 1) {
    std::vector<bool> drop(s.observations.size());
    std::size_t dropped = 0;
    for (std::size_t k = 0; k < drop.size(); ++k) {
      drop[k] = fire(true);
      dropped += drop[k];
    }
    if (dropped == drop.size()) {
      const auto keep = std::min(drop.size() - 1, static_cast<std::size_t>(uniform01(rng) * drop.size()));
      drop[keep] = false;
    }
    std::vector<Observation> kept;
    for (std::size_t k = 0; k < drop.size(); ++k)
      if (!drop[k]) kept.push_back(std::move(s.observations[k]));
    s.observations = std::move(kept);
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  if (fire(c.position_jitter)) {
    s.heliostat.position = s.heliostat.position + Vec3{gauss(rng), gauss(rng), gauss(rng)} * c.heliostat_jitter_sigma;
  }
  for (auto& o : s.observations) {
    if (!fire(c.position_jitter)) continue;
    double az = 0.0, el = 0.0;
    azimuth_elevation(o.sun.direction, az, el);
    az += c.sun_jitter_sigma * gauss(rng);
    el = std::clamp(el + c.sun_jitter_sigma * gauss(rng), 0.0, 90.0);
    o.sun.direction = solar_vector(az, el);
  }
  if (fire(c.label_noise)) {
    for (auto& f : s.truth.facets)
      for (double& z : f.control_z)
        z = std::clamp(z + c.surface_noise_sigma * gauss(rng), -kMaxDeviationMm, kMaxDeviationMm);
  }

  for (auto& o : s.observations) {
    FluxImage& img = o.flux;
    const auto [w, h] = grid_dims(img);
    Grid g = img.normalized;
    bool changed = false;
    if (fire(c.clamp)) g = clamp_overexpose(g, rng, c.clamp_range), changed = true;
    if (fire(c.background)) g = background_noise(g, rng, c.background_noise_max), changed = true;
    if (fire(c.contrast)) g = adjust_contrast(g, rng, c.contrast_gamma_range), changed = true;
    if (fire(c.crop)) g = crop_rescale(g, w, h, rng), changed = true;
    if (fire(c.deform)) g = deform_flux(g, w, h, rng, c.deform_amp), changed = true;
    if (fire(c.smooth)) g = smooth_flux(g, w, h, c.smooth_kernel), changed = true;
    if (!changed) continue;
    renormalize(g);
    // Keep raw consistent with the degraded view at the original peak scale.
    const float peak = img.raw.empty() ? 0.0f : *std::max_element(img.raw.begin(), img.raw.end());
    const float scale = peak > 0.0f ? peak : 1.0f;
    for (std::size_t i = 0; i < g.size(); ++i) img.raw[i] = static_cast<float>(g[i]) * scale;
    img.normalized = std::move(g);
    img.no_hits = std::all_of(img.normalized.begin(), img.normalized.end(), [](double v) { return v == 0.0; });
  }
  return s;
}

}  // namespace helioflux
