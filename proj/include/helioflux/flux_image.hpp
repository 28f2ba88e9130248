#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "helioflux/geometry.hpp"

namespace helioflux {

/// Flat Lambertian screen. Image columns run along right() = up x normal,
/// rows run from the top edge downward.
struct TargetPlane {
  Vec3 center{0, 0, 36};
  Vec3 normal{0, 1, 0};
  Vec3 up{0, 0, 1};
  double width = 8.0;
  double height = 8.0;
  int res_x = 64;
  int res_y = 64;

  Vec3 right() const { return cross(up, normal); }
  bool operator==(const TargetPlane&) const = default;
};

/// Cylindrical receiver section, concave side toward the field. The apex
/// (middle of the arc) sits at apex_height above the tower base; the section
/// faces `facing_azimuth` and is tilted toward the ground by `tilt`.
struct CurvedReceiver {
  Vec3 tower_base{0, 0, 0};
  double apex_height = 55.0;     // m
  double radius = 4.14;          // m
  double opening_angle = 60.0;   // deg
  double tilt = 25.0;            // deg toward the ground
  double height_extent = 5.0;    // m
  double facing_azimuth = 0.0;   // deg clockwise from North
  int res_x = 64;
  int res_y = 64;

  Vec3 apex() const { return tower_base + Vec3{0, 0, apex_height}; }
  bool operator==(const CurvedReceiver&) const = default;
};

using FluxGeometry = std::variant<TargetPlane, CurvedReceiver>;

void validate(const TargetPlane& t);
void validate(const CurvedReceiver& r);
void validate(const FluxGeometry& g);

int resolution_x(const FluxGeometry& g);
int resolution_y(const FluxGeometry& g);

nlohmann::json to_json(const FluxGeometry& g);
FluxGeometry geometry_from_json(const nlohmann::json& j);

class GeometryMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raw hit counts plus the max-normalized view consumed by the model.
/// Grids are row-major, row 0 at the top.
struct FluxImage {
  int width = 0;
  int height = 0;
  std::uint64_t ray_count = 0;
  std::vector<float> raw;
  std::vector<double> normalized;
  FluxGeometry geometry;
  bool no_hits = true;

  static FluxImage empty(const FluxGeometry& g, std::uint64_t rays = 0);

  /// Recomputes `normalized` and `no_hits` from `raw`.
  void renormalize();

  double total_raw() const;
};

/// Divides by the maximum; all-zero input stays all-zero.
void normalize_max(std::vector<double>& grid);

/// Element-wise sum of raw grids, then renormalization. Throws
/// GeometryMismatch if the images do not share geometry and resolution.
FluxImage superpose(const std::vector<FluxImage>& images);

void write_flux(std::ostream& out, const FluxImage& img);
FluxImage read_flux(std::istream& in);
void write_flux_file(const std::string& path, const FluxImage& img);
FluxImage read_flux_file(const std::string& path);

}  // namespace helioflux
