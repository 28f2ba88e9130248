#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "helioflux/geometry.hpp"

namespace helioflux {

inline constexpr int kControlGrid = 8;
inline constexpr int kControlPoints = kControlGrid * kControlGrid;
inline constexpr double kMaxDeviationMm = 50.0;

/// Clamped uniform knot vector for `count` control points of degree `degree`.
std::vector<double> clamped_uniform_knots(int count, int degree);

/// Deviation surface of one facet over its canted plane. Unit weights, so
/// the NURBS reduces to a B-spline. control_z is indexed [i * 8 + j] with i
/// along the facet width (u) and j along its height (v); values in mm.
struct FacetSurface {
  std::array<double, kControlPoints> control_z{};
  int degree = 3;
  std::vector<double> knots_u = clamped_uniform_knots(kControlGrid, 3);
  std::vector<double> knots_v = clamped_uniform_knots(kControlGrid, 3);

  double& at(int i, int j) { return control_z[static_cast<std::size_t>(i * kControlGrid + j)]; }
  double at(int i, int j) const { return control_z[static_cast<std::size_t>(i * kControlGrid + j)]; }
  bool operator==(const FacetSurface&) const = default;
};

/// Facets in HeliostatSpec order: lower-left, lower-right, upper-left, upper-right.
struct HeliostatSurface {
  std::array<FacetSurface, kFacetCount> facets{};
  bool operator==(const HeliostatSurface&) const = default;
};

class MalformedSurface : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws MalformedSurface on bad knots, non-finite or out-of-range values.
void validate(const FacetSurface& s);
void validate(const HeliostatSurface& s);

struct SurfacePoint {
  double z_mm = 0.0;
  Vec3 normal{0, 0, 1};  // facet frame
};

/// Evaluates z and the analytic normal of the lifted surface
/// (width * u, height * v, z(u, v) / 1000).
SurfacePoint nurbs_eval(const FacetSurface& s, double u, double v, double width = kFacetWidth,
                        double height = kFacetHeight);

/// Value and first partial derivatives in parameter space (mm per unit u, v).
struct SurfaceDerivatives {
  double z = 0.0;
  double dz_du = 0.0;
  double dz_dv = 0.0;
};
SurfaceDerivatives nurbs_derivatives(const FacetSurface& s, double u, double v);

/// Normal of the lifted surface from parameter-space partials.
Vec3 lifted_normal(double dz_du_mm, double dz_dv_mm, double width, double height);

}  // namespace helioflux
