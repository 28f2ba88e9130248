#include "helioflux/nurbs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace helioflux {

namespace {

void validate_knots(const std::vector<double>& knots, int degree, const char* which) {
  const auto expected = static_cast<std::size_t>(kControlGrid + degree + 1);
  if (knots.size() != expected)
    throw MalformedSurface(std::string(which) + ": expected " + std::to_string(expected) + " knots");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] >= knots[i - 1])) throw MalformedSurface(std::string(which) + ": knots must be nondecreasing");
  for (int i = 0; i <= degree; ++i) {
    if (knots[static_cast<std::size_t>(i)] != 0.0 || knots[knots.size() - 1 - static_cast<std::size_t>(i)] != 1.0)
      throw MalformedSurface(std::string(which) + ": knots must be clamped to [0, 1]");
  }
}

// Span index k with knots[k] <= t < knots[k+1], last span for t == 1.
int find_span(const std::vector<double>& knots, int degree, double t) {
  const int n = kControlGrid - 1;
  if (t >= knots[static_cast<std::size_t>(n + 1)]) return n;
  if (t <= knots[static_cast<std::size_t>(degree)]) return degree;
  const auto first = knots.begin() + degree;
  const auto last = knots.begin() + n + 1;
  return static_cast<int>(std::upper_bound(first, last, t) - knots.begin()) - 1;
}

// Nonzero basis values and first derivatives at t (The NURBS Book, A2.3 with n = 1).
void basis_with_derivative(const std::vector<double>& knots, int degree, int span, double t, double* value,
                           double* derivative) {
  constexpr int kMaxDegree = 7;
  double ndu[kMaxDegree + 1][kMaxDegree + 1];
  double left[kMaxDegree + 1];
  double right[kMaxDegree + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int r = 0; r <= degree; ++r) value[r] = ndu[r][degree];
  if (degree == 0) {
    derivative[0] = 0.0;
    return;
  }
  for (int r = 0; r <= degree; ++r) {
    double d = 0.0;
    if (r >= 1) d += ndu[r - 1][degree - 1] / ndu[degree][r - 1];
    if (r <= degree - 1) d -= ndu[r][degree - 1] / ndu[degree][r];
    derivative[r] = degree * d;
  }
}

}  // namespace

std::vector<double> clamped_uniform_knots(int count, int degree) {
  const int interior = count - degree - 1;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(count + degree + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(0.0);
  for (int i = 1; i <= interior; ++i) knots.push_back(static_cast<double>(i) / (interior + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(1.0);
  return knots;
}

void validate(const FacetSurface& s) {
  if (s.degree < 1 || s.degree > 7 || s.degree >= kControlGrid) throw MalformedSurface("unsupported spline degree");
  validate_knots(s.knots_u, s.degree, "knots_u");
  validate_knots(s.knots_v, s.degree, "knots_v");
  for (double z : s.control_z)
    if (!std::isfinite(z) || std::abs(z) > kMaxDeviationMm)
      throw MalformedSurface("control point outside +/-50 mm or non-finite");
}

void validate(const HeliostatSurface& s) {
  for (const auto& f : s.facets) validate(f);
}

SurfaceDerivatives nurbs_derivatives(const FacetSurface& s, double u, double v) {
  const int p = s.degree;
  if (s.knots_u.size() != static_cast<std::size_t>(kControlGrid + p + 1) ||
      s.knots_v.size() != static_cast<std::size_t>(kControlGrid + p + 1))
    throw MalformedSurface("knot vector length does not match degree");
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const int su = find_span(s.knots_u, p, u);
  const int sv = find_span(s.knots_v, p, v);
  double nu[8], du[8], nv[8], dv[8];
  basis_with_derivative(s.knots_u, p, su, u, nu, du);
  basis_with_derivative(s.knots_v, p, sv, v, nv, dv);

  SurfaceDerivatives out;
  for (int a = 0; a <= p; ++a) {
    const int i = su - p + a;
    double row_n = 0.0;
    double row_d = 0.0;
    for (int b = 0; b <= p; ++b) {
      const double c = s.at(i, sv - p + b);
      row_n += nv[b] * c;
      row_d += dv[b] * c;
    }
    out.z += nu[a] * row_n;
    out.dz_du += du[a] * row_n;
    out.dz_dv += nu[a] * row_d;
  }
  return out;
}

Vec3 lifted_normal(double dz_du_mm, double dz_dv_mm, double width, double height) {
  // S_u = (w, 0, z_u), S_v = (0, h, z_v) in meters; n = S_u x S_v.
  const double zu = dz_du_mm * 1e-3;
  const double zv = dz_dv_mm * 1e-3;
  const Vec3 n{-height * zu, -width * zv, width * height};
  return n / norm(n);
}

SurfacePoint nurbs_eval(const FacetSurface& s, double u, double v, double width, double height) {
  const SurfaceDerivatives d = nurbs_derivatives(s, u, v);
  return {d.z, lifted_normal(d.dz_du, d.dz_dv, width, height)};
}

}  // namespace helioflux
