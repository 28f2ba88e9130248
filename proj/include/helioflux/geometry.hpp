#pragma once

// Field coordinates are East-North-Up in meters. Azimuth is measured
// clockwise from North, elevation above the horizon.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace helioflux {

struct Vec3 {
  double e = 0.0;
  double n = 0.0;
  double u = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double east, double north, double up) : e(east), n(north), u(up) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {e + o.e, n + o.n, u + o.u}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {e - o.e, n - o.n, u - o.u}; }
  constexpr Vec3 operator-() const { return {-e, -n, -u}; }
  constexpr Vec3 operator*(double s) const { return {e * s, n * s, u * s}; }
  constexpr Vec3 operator/(double s) const { return {e / s, n / s, u / s}; }
  Vec3& operator+=(const Vec3& o) {
    e += o.e;
    n += o.n;
    u += o.u;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.e * b.e + a.n * b.n + a.u * b.u; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.n * b.u - a.u * b.n, a.u * b.e - a.e * b.u, a.e * b.n - a.n * b.e};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalize(const Vec3& v) {
  const double len = norm(v);
  if (!(len > 0.0)) throw std::domain_error("cannot normalize a zero-length vector");
  return v / len;
}

/// Mirror reflection of a propagation direction about a unit normal.
constexpr Vec3 reflect(const Vec3& dir, const Vec3& normal) {
  return dir - normal * (2.0 * dot(dir, normal));
}

/// Row-major 3x3 matrix; used for rotations.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static constexpr Mat3 identity() { return Mat3{}; }
  static constexpr Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    return Mat3{{c0.e, c1.e, c2.e, c0.n, c1.n, c2.n, c0.u, c1.u, c2.u}};
  }

  constexpr double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  constexpr Vec3 column(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.e + m[1] * v.n + m[2] * v.u, m[3] * v.e + m[4] * v.n + m[5] * v.u,
            m[6] * v.e + m[7] * v.n + m[8] * v.u};
  }
  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r.m[static_cast<std::size_t>(i * 3 + j)] = s;
      }
    return r;
  }
  constexpr Mat3 transposed() const {
    return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  constexpr double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  constexpr bool operator==(const Mat3&) const = default;
};

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
Mat3 rotation_between(const Vec3& from, const Vec3& to);

/// Orthonormal with determinant +1, to `tol`.
bool is_rotation(const Mat3& r, double tol = 1e-9);

struct SunState {
  Vec3 direction{0.0, 0.0, 1.0};  // unit, field toward sun
  double csr = 0.0;               // circumsolar ratio in [0, 0.15]
};

inline constexpr double kMaxCsr = 0.15;

inline constexpr double kFacetWidth = 1.6;
inline constexpr double kFacetHeight = 1.25;
inline constexpr double kDefaultFacetGap = 0.02;
inline constexpr double kMinFocalDistance = 65.0;
inline constexpr int kFacetCount = 4;

struct FacetSpec {
  double width = kFacetWidth;
  double height = kFacetHeight;
  Vec3 center_offset;  // heliostat frame: e = right, n = up along the mirror, u = normal
  Mat3 canting_rotation = Mat3::identity();
};

struct HeliostatSpec {
  std::string id;
  Vec3 position;
  std::array<FacetSpec, kFacetCount> facets;
  double focal_distance = kMinFocalDistance;
};

/// Four facets in fixed order: lower-left, lower-right, upper-left, upper-right.
std::array<FacetSpec, kFacetCount> default_facet_layout(double gap = kDefaultFacetGap);

/// Heliostat with the default layout and canting applied.
HeliostatSpec make_heliostat(std::string id, const Vec3& position, double focal_distance,
                             double gap = kDefaultFacetGap);

/// Throws std::invalid_argument when the heliostat violates its invariants.
void validate(const HeliostatSpec& spec);

Vec3 solar_vector(double azimuth_deg, double elevation_deg);

/// Inverse of solar_vector; azimuth in [0, 360).
void azimuth_elevation(const Vec3& dir, double& azimuth_deg, double& elevation_deg);

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mirror normal that reflects light arriving from `sun_dir` toward `aim_point`.
/// Throws DegenerateGeometry when the sun and target directions are opposite.
Vec3 track_orientation(const Vec3& sun_dir, const Vec3& heliostat_pos, const Vec3& aim_point);

/// On-axis canting: each facet is tilted so the reflection of light arriving
/// along the heliostat normal passes from its center through the point at
/// `focal_distance` along that normal. A non-finite focal distance means flat.
HeliostatSpec cant_facets(HeliostatSpec spec);

/// World orientation of a heliostat whose mirror normal is `normal`; the
/// first column is horizontal (mirror "right"), the third is the normal.
Mat3 heliostat_frame(const Vec3& normal);

}  // namespace helioflux
