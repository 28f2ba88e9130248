#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helioflux/geometry.hpp"

using namespace helioflux;

namespace {

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.e, b.e, tol);
  EXPECT_NEAR(a.n, b.n, tol);
  EXPECT_NEAR(a.u, b.u, tol);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return normalize(Vec3{g(rng), g(rng), g(rng)});
}

// Distance from point p to the line through origin o with direction d.
double line_point_distance(const Vec3& o, const Vec3& d, const Vec3& p) {
  return norm(cross(p - o, normalize(d)));
}

}  // namespace

TEST(SolarVector, CardinalDirections) {
  expect_vec_near(solar_vector(0, 0), {0, 1, 0}, 1e-15);
  expect_vec_near(solar_vector(90, 0), {1, 0, 0}, 1e-15);
  expect_vec_near(solar_vector(180, 45), {0, -0.70711, 0.70711}, 1e-5);
}

TEST(SolarVector, UnitLengthAndRoundTrip) {
  for (double az = 0; az < 360; az += 7.5)
    for (double el = -90; el <= 90; el += 5) {
      const Vec3 v = solar_vector(az, el);
      EXPECT_NEAR(norm(v), 1.0, 1e-12);
      if (std::abs(el) < 89) {
        double a2, e2;
        azimuth_elevation(v, a2, e2);
        EXPECT_NEAR(a2, az, 1e-9);
        EXPECT_NEAR(e2, el, 1e-9);
      }
    }
}

TEST(TrackOrientation, AngleBisector) {
  const Vec3 n = track_orientation({0, 0, 1}, {0, 0, 0}, {0, 10, 0});
  expect_vec_near(n, {0, 0.70711, 0.70711}, 1e-5);
}

TEST(TrackOrientation, RetroreflectionReturnsSunDirection) {
  const Vec3 d = normalize(Vec3{0.3, -0.4, 0.8});
  expect_vec_near(track_orientation(d, {1, 2, 3}, Vec3{1, 2, 3} + d * 50.0), d, 1e-12);
}

TEST(TrackOrientation, OppositeDirectionsAreDegenerate) {
  EXPECT_THROW(track_orientation({0, 0, 1}, {0, 0, 0}, {0, 0, -5}), DegenerateGeometry);
  EXPECT_THROW(track_orientation({0, 0, 1}, {1, 1, 1}, {1, 1, 1}), DegenerateGeometry);
}

TEST(TrackOrientation, ReflectionHitsAimForRandomGeometry) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-200, 200);
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 sun = random_unit(rng);
    const Vec3 helio{pos(rng), pos(rng), pos(rng)};
    const Vec3 aim{pos(rng), pos(rng), pos(rng)};
    const Vec3 target_dir = normalize(aim - helio);
    if (norm(sun + target_dir) < 1e-6) continue;
    const Vec3 n = track_orientation(sun, helio, aim);
    expect_vec_near(reflect(-sun, n), target_dir, 1e-9);
  }
}

TEST(Canting, InfiniteFocalDistanceIsFlat) {
  HeliostatSpec h;
  h.facets = default_facet_layout();
  h.focal_distance = std::numeric_limits<double>::infinity();
  h = cant_facets(h);
  for (const auto& f : h.facets) EXPECT_EQ(f.canting_rotation, Mat3::identity());
}

TEST(Canting, FacetCenterRayPassesThroughFocus) {
  HeliostatSpec h;
  h.facets = default_facet_layout();
  h.facets[3].center_offset = {0.85, 0.675, 0};
  h.focal_distance = 65.0;
  h = cant_facets(h);
  const FacetSpec& f = h.facets[3];
  ASSERT_TRUE(is_rotation(f.canting_rotation));
  const Vec3 n = f.canting_rotation * Vec3{0, 0, 1};
  const Vec3 reflected = reflect({0, 0, -1}, n);
  EXPECT_LT(line_point_distance(f.center_offset, reflected, {0, 0, 65.0}), 1e-3);
  const double tilt = std::acos(n.u);
  EXPECT_NEAR(tilt, 0.5 * std::atan(norm(f.center_offset) / 65.0), 1e-6);
}

TEST(Canting, MirrorSymmetricOffsetsGiveMirroredRotations) {
  const HeliostatSpec h = make_heliostat("h", {0, 100, 0}, 120.0);
  const Vec3 n0 = h.facets[0].canting_rotation * Vec3{0, 0, 1};
  const Vec3 n1 = h.facets[1].canting_rotation * Vec3{0, 0, 1};
  const Vec3 n2 = h.facets[2].canting_rotation * Vec3{0, 0, 1};
  const Vec3 n3 = h.facets[3].canting_rotation * Vec3{0, 0, 1};
  expect_vec_near(n1, {-n0.e, n0.n, n0.u}, 1e-15);
  expect_vec_near(n2, {n0.e, -n0.n, n0.u}, 1e-15);
  expect_vec_near(n3, {-n0.e, -n0.n, n0.u}, 1e-15);
}

TEST(Canting, ReducesFocalPlaneSpreadForRandomLayouts) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> off(-1.5, 1.5);
  std::uniform_real_distribution<double> focal(65, 400);
  auto rms_spread = [](const HeliostatSpec& h) {
    double s = 0.0;
    for (const auto& f : h.facets) {
      const Vec3 r = reflect({0, 0, -1}, f.canting_rotation * Vec3{0, 0, 1});
      const double t = (h.focal_distance - f.center_offset.u) / r.u;
      const Vec3 p = f.center_offset + r * t;
      s += p.e * p.e + p.n * p.n;
    }
    return std::sqrt(s / kFacetCount);
  };
  for (int trial = 0; trial < 200; ++trial) {
    HeliostatSpec h;
    for (auto& f : h.facets) f.center_offset = {off(rng), off(rng), 0};
    h.focal_distance = focal(rng);
    const HeliostatSpec canted = cant_facets(h);
    EXPECT_LT(rms_spread(canted), rms_spread(h));
  }
}

TEST(HeliostatSpec, ValidationRejectsShortFocalDistance) {
  HeliostatSpec h = make_heliostat("a", {0, 80, 0}, 70.0);
  EXPECT_NO_THROW(validate(h));
  h.focal_distance = 40.0;
  EXPECT_THROW(validate(h), std::invalid_argument);
}

TEST(Rotation, RotationBetweenMapsVectors) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec3 a = random_unit(rng);
    const Vec3 b = random_unit(rng);
    const Mat3 r = rotation_between(a, b);
    EXPECT_TRUE(is_rotation(r));
    expect_vec_near(r * a, b, 1e-12);
  }
  const Mat3 flip = rotation_between({0, 0, 1}, {0, 0, -1});
  EXPECT_TRUE(is_rotation(flip));
  expect_vec_near(flip * Vec3{0, 0, 1}, {0, 0, -1}, 1e-15);
}
