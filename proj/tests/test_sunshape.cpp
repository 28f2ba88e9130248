#include <gtest/gtest.h>

#include "helioflux/sunshape.hpp"
#include "oracles.hpp"

using namespace helioflux;

TEST(BuiePdf, CenterOfDiscIsOne) {
  for (double chi : {0.0, 0.01, 0.1, 0.15}) EXPECT_DOUBLE_EQ(buie_pdf(0.0, chi), 1.0);
}

TEST(BuiePdf, CircumsolarCoefficients) {
  const BuieCoefficients c = buie_coefficients(0.1);
  EXPECT_NEAR(c.kappa, 0.5390, 1e-4);  // 0.53891 exactly
  EXPECT_NEAR(c.gamma, -2.5166, 5e-5);
}

TEST(BuiePdf, BranchesAndSupport) {
  const double chi = 0.05;
  const BuieCoefficients c = buie_coefficients(chi);
  EXPECT_DOUBLE_EQ(buie_pdf(3.0, chi), std::cos(0.326 * 3.0) / std::cos(0.308 * 3.0));
  EXPECT_DOUBLE_EQ(buie_pdf(10.0, chi), std::exp(c.kappa) * std::pow(10.0, c.gamma));
  EXPECT_EQ(buie_pdf(50.0, chi), 0.0);
  EXPECT_EQ(buie_pdf(10.0, 0.0), 0.0);
  EXPECT_THROW(buie_pdf(-1.0, chi), std::domain_error);
}

TEST(BuiePdf, RawProfileUnderestimatesSmallCsr) {
  // Documents why the sampler calibrates chi: the raw profile at chi = 0.02
  // has a circumsolar fraction far below 0.02.
  const double raw = oracle::circumsolar_fraction([](double t) { return buie_pdf(t, 0.02); }, 4.65, 43.6);
  EXPECT_NEAR(raw, 0.005813, 1e-5);
}

TEST(BuieSampler, CalibratedCsrWithinTolerance) {
  for (double csr : {0.02, 0.05, 0.10, 0.15}) {
    const BuieSampler s(SunshapeConfig{csr});
    const double chi = s.chi();
    const double frac = oracle::circumsolar_fraction([&](double t) { return buie_pdf(t, chi); }, 4.65, 43.6);
    EXPECT_NEAR(frac, csr, 0.25 * csr) << "csr " << csr;
    EXPECT_NEAR(s.circumsolar_mass(), frac, 1e-4 * frac + 1e-9) << "table mass vs quadrature, csr " << csr;
  }
}

TEST(BuieSampler, ZeroCsrStaysOnDisc) {
  const BuieSampler s(SunshapeConfig{0.0});
  EXPECT_EQ(s.chi(), 0.0);
  CounterRng rng(5, 0);
  for (int i = 0; i < 200000; ++i) EXPECT_LE(s.sample(rng).theta, 4.65);
}

TEST(BuieSampler, MeanThetaMatchesQuadrature) {
  const BuieSampler s(SunshapeConfig{0.0});
  CounterRng rng(17, 0);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += s.sample(rng).theta;
  const double expected = oracle::mean_theta([](double t) { return buie_pdf(t, 0.0); }, 43.6, 4.65);
  EXPECT_NEAR(sum / n, expected, 0.01 * expected);
}

TEST(BuieSampler, SameSeedSameStream) {
  const BuieSampler s(SunshapeConfig{0.07});
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    const auto x = buie_sample(s, a);
    const auto y = buie_sample(s, b);
    ASSERT_EQ(x.theta, y.theta);
    ASSERT_EQ(x.phi, y.phi);
  }
}

TEST(BuieSampler, RejectsOutOfRangeCsr) {
  EXPECT_THROW(BuieSampler(SunshapeConfig{0.2}), std::invalid_argument);
  EXPECT_THROW(BuieSampler(SunshapeConfig{-0.01}), std::invalid_argument);
}

TEST(PerturbDirection, AngleMatchesTheta) {
  const Vec3 axis = normalize(Vec3{0.2, -0.5, 0.7});
  for (double theta : {0.0, 1.0, 4.65, 30.0}) {
    for (double phi : {0.0, 1.0, 3.0}) {
      const Vec3 d = perturb_direction(axis, {theta, phi});
      EXPECT_NEAR(norm(d), 1.0, 1e-12);
      EXPECT_NEAR(std::atan2(norm(cross(d, axis)), dot(d, axis)) * 1e3, theta, 1e-9);
    }
  }
}
