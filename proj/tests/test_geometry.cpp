#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "spherecal/errors.hpp"
#include "spherecal/geometry.hpp"
#include "spherecal/oracle.hpp"

using namespace spherecal;
using spherecal::testing::kAllKinds;
using spherecal::testing::largest_test_angle;
using spherecal::testing::ray_at;

namespace {

constexpr double kPi = std::numbers::pi;

// Closed forms written out independently of the library.
double closed_form_radius(ProjectionKind k, double c, double a) {
  switch (k) {
    case ProjectionKind::Pinhole: return c * std::tan(a);
    case ProjectionKind::Equidistant: return c * a;
    case ProjectionKind::Equisolid: return 2.0 * c * std::sin(a / 2.0);
    case ProjectionKind::Stereographic: return 2.0 * c * std::tan(a / 2.0);
    case ProjectionKind::Orthographic: return c * std::sin(a);
  }
  return 0.0;
}

}  // namespace

TEST(RadialMapping, MatchesClosedForms) {
  std::mt19937_64 rng(11);
  for (ProjectionKind k : kAllKinds) {
    std::uniform_real_distribution<double> angle(0.0, largest_test_angle(k));
    for (int i = 0; i < 200; ++i) {
      const double a = angle(rng);
      EXPECT_NEAR(radial_mapping(k, 500.0, a), closed_form_radius(k, 500.0, a),
                  1e-12 * std::max(1.0, closed_form_radius(k, 500.0, a)))
          << projection_name(k);
    }
  }
}

TEST(RadialMapping, EquidistantAtNinetyDegrees) {
  EXPECT_NEAR(radial_mapping(ProjectionKind::Equidistant, 17.0, kPi / 2.0), 26.704, 5e-4);
}

TEST(RadialMapping, InverseRoundTripAllModels) {
  std::mt19937_64 rng(12);
  for (ProjectionKind k : kAllKinds) {
    std::uniform_real_distribution<double> angle(1e-6, largest_test_angle(k));
    for (int i = 0; i < 1000; ++i) {
      const double a = angle(rng);
      const double r = radial_mapping(k, 321.0, a);
      EXPECT_NEAR(inverse_radial_mapping(k, 321.0, r), a, 1e-12) << projection_name(k);
    }
  }
}

TEST(RadialMapping, SmallAnglesAgreeWithPinhole) {
  const double a = 1e-4;
  for (ProjectionKind k : kAllKinds) {
    const double r = radial_mapping(k, 800.0, a);
    EXPECT_LT(std::abs(r - 800.0 * a) / (800.0 * a), 1e-7) << projection_name(k);
  }
}

TEST(Projection, ForwardInverseRoundTripAllModels) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> az(-kPi, kPi);
  for (ProjectionKind k : kAllKinds) {
    ProjectionModel m;
    m.kind = k;
    m.iop = {612.0, 3.5, -2.0};
    std::uniform_real_distribution<double> angle(1e-3, largest_test_angle(k));
    for (int i = 0; i < 500; ++i) {
      const Vec3 ray = ray_at(angle(rng), az(rng));
      const auto x = project_ray(3.7 * ray, m);
      ASSERT_TRUE(x.has_value());
      const Vec3 back = back_project(*x, m);
      EXPECT_LT((back - ray).norm(), 1e-12) << projection_name(k);
    }
  }
}

TEST(Projection, RotationAboutAxisRotatesImage) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> az(-kPi, kPi);
  for (ProjectionKind k : kAllKinds) {
    ProjectionModel m;
    m.kind = k;
    m.iop = {400.0, 0.0, 0.0};
    std::uniform_real_distribution<double> angle(0.01, largest_test_angle(k));
    for (int i = 0; i < 100; ++i) {
      const Vec3 v = ray_at(angle(rng), az(rng));
      const double phi = az(rng);
      const Mat3 rz = Eigen::AngleAxisd(phi, Vec3::UnitZ()).toRotationMatrix();
      const auto a = project_ray(v, m);
      const auto b = project_ray(rz * v, m);
      ASSERT_TRUE(a && b);
      const Vec2 expected = rz.topLeftCorner<2, 2>() * *a;
      EXPECT_LT((*b - expected).norm(), 1e-12 * std::max(1.0, a->norm())) << projection_name(k);
    }
  }
}

TEST(Geometry, RetractionIsLeftMultiplication) {
  const Quat q(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  const Vec3 omega(0.1, -0.2, 0.05);
  const Quat r = retract(q, omega);
  const Mat3 expected = Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix() *
                        q.toRotationMatrix();
  EXPECT_LT((r.toRotationMatrix() - expected).norm(), 1e-14);
  EXPECT_NEAR(r.norm(), 1.0, 1e-15);
}

TEST(Geometry, CameraFrameConvention) {
  CameraPose pose;
  pose.orientation = Quat(Eigen::AngleAxisd(kPi / 2.0, Vec3::UnitZ()));
  pose.position = Vec3(1.0, 2.0, 3.0);
  const Vec3 v = to_camera_frame(Vec3(2.0, 2.0, 3.0), pose);
  EXPECT_LT((v - Vec3(0.0, 1.0, 0.0)).norm(), 1e-15);
}

TEST(Geometry, HemisphereSignOfZeroIsPositive) {
  EXPECT_EQ(hemisphere_sign(0.0), 1.0);
  EXPECT_EQ(hemisphere_sign(-0.0), 1.0);
  EXPECT_EQ(hemisphere_sign(-1e-300), -1.0);
}

TEST(Geometry, SphereZRejectsPointsOutsideTheSphere) {
  EXPECT_THROW(sphere_z(3.0, 4.0, 4.9, 1.0), DegenerateInput);
  EXPECT_DOUBLE_EQ(sphere_z(3.0, 4.0, 13.0, -1.0), -12.0);
}

TEST(Collinearity, FiniteAndZeroAtNinetyDegrees) {
  const double c = 500.0;
  for (double az : {0.0, 0.3, 1.9, -2.4}) {
    const Vec3 v(std::cos(az) * 2.0, std::sin(az) * 2.0, 0.0);
    const Vec2 xt = sphere_projection(v, c);
    const double g = collinearity_residual(v, xt.x(), xt.y(), c);
    EXPECT_TRUE(std::isfinite(g));
    // sqrt(c^2 - r^2) has infinite slope at r = c, so one rounding of r
    // leaves about rho * c * sqrt(2 eps).
    const double eps = std::numeric_limits<double>::epsilon();
    EXPECT_LE(std::abs(g), 2.0 * 2.0 * c * std::sqrt(2.0 * eps));
    EXPECT_NEAR(azimuth_residual(v, xt.x(), xt.y()), 0.0, 1e-12);
  }
}

TEST(Collinearity, ZeroOnBothHemispheres) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> angle(0.01, kPi - 0.01), az(-kPi, kPi);
  for (int i = 0; i < 500; ++i) {
    const Vec3 v = 2.5 * ray_at(angle(rng), az(rng));
    const Vec2 xt = sphere_projection(v, 300.0);
    EXPECT_NEAR(collinearity_residual(v, xt.x(), xt.y(), 300.0), 0.0, 1e-9);
    // The lifted bearing is the ray itself.
    const Vec3 b = sphere_bearing(xt.x(), xt.y(), 300.0, hemisphere_sign(v.z()));
    EXPECT_LT((b - v.normalized()).norm(), 1e-12);
  }
}

TEST(Collinearity, QuotientFormAgreesAwayFromTheEquator) {
  const Vec3 v(0.3, -0.2, 1.0);
  const double c = 100.0;
  const Vec2 xt = sphere_projection(v, c) * 1.01;
  const double rho = std::hypot(v.x(), v.y());
  const double q = std::sqrt(c * c - xt.squaredNorm());
  // g = rho q - Zc r and the quotient rho/Zc - r/q differ by the factor Zc q.
  EXPECT_NEAR(collinearity_residual(v, xt.x(), xt.y(), c),
              collinearity_residual_quotient(v, xt.x(), xt.y(), c) * v.z() * q, 1e-10);
  EXPECT_NEAR(rho / v.z() - xt.norm() / q, collinearity_residual_quotient(v, xt.x(), xt.y(), c),
              1e-15);
}

TEST(Collinearity, AnalyticDerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> angle(0.05, kPi - 0.05), az(-kPi, kPi), u(-1.0, 1.0);
  auto g = [](const Vec3& v, double x, double y, double c) {
    return Vec2(collinearity_residual(v, x, y, c), azimuth_residual(v, x, y));
  };
  for (int i = 0; i < 100; ++i) {
    const double c = 400.0 + 200.0 * u(rng);
    const Vec3 v = (1.0 + std::abs(u(rng))) * ray_at(angle(rng), az(rng));
    // Perturb off the solution so the derivatives are generic.
    const Vec2 xt = sphere_projection(v, c) + Vec2(u(rng), u(rng));
    if (c * c - xt.squaredNorm() < 0.01 * c * c) continue;  // near the equator
    const ConditionJacobian j = condition_jacobian(v, xt.x(), xt.y(), c);
    EXPECT_LT((j.value - g(v, xt.x(), xt.y(), c)).norm(), 1e-9);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * v.norm();
      Vec3 dv = Vec3::Zero();
      dv[k] = h;
      const Vec2 fd = (g(v + dv, xt.x(), xt.y(), c) - g(v - dv, xt.x(), xt.y(), c)) / (2.0 * h);
      EXPECT_LT((fd - j.d_v.col(k)).norm(), 1e-5 * std::max(1.0, j.d_v.col(k).norm()));
    }
    for (int k = 0; k < 2; ++k) {
      const double h = 1e-4;
      Vec2 d = Vec2::Zero();
      d[k] = h;
      const Vec2 fd = (g(v, xt.x() + d.x(), xt.y() + d.y(), c) -
                       g(v, xt.x() - d.x(), xt.y() - d.y(), c)) / (2.0 * h);
      EXPECT_LT((fd - j.d_xt.col(k)).norm(), 1e-5 * std::max(1.0, j.d_xt.col(k).norm()));
    }
    const double h = 1e-4;
    const Vec2 fd = (g(v, xt.x(), xt.y(), c + h) - g(v, xt.x(), xt.y(), c - h)) / (2.0 * h);
    EXPECT_LT((fd - j.d_c).norm(), 1e-5 * std::max(1.0, j.d_c.norm()));
  }
}

TEST(Collinearity, BehindCameraBranchHasZeroResidualWithExactCorrection) {
  ProjectionModel m;
  m.kind = ProjectionKind::Equidistant;
  m.iop = {220.0, 1.5, -1.0};
  const double c_sphere = 300.0;
  int behind = 0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> angle(0.05, 125.0 * kPi / 180.0), az(-kPi, kPi);
  for (int i = 0; i < 300; ++i) {
    const Vec3 v = 4.0 * ray_at(angle(rng), az(rng));
    const auto x = project_ray(v, m);
    ASSERT_TRUE(x.has_value());
    const Vec2 d = exact_sphere_correction(*x, m, c_sphere);
    ImageObservation obs;
    obs.x = x->x();
    obs.y = x->y();
    const Vec2 xt = corrected_coords(obs, m.iop, d);
    EXPECT_NEAR(collinearity_residual(v, xt.x(), xt.y(), c_sphere), 0.0, 1e-9);
    EXPECT_NEAR(azimuth_residual(v, xt.x(), xt.y()), 0.0, 1e-9);
    if (v.z() < 0.0) ++behind;
  }
  EXPECT_GT(behind, 50);
}

TEST(Geometry, DegenerateRayThrows) {
  EXPECT_THROW(incidence_angle(Vec3::Zero()), DegenerateInput);
  EXPECT_THROW(sphere_projection(Vec3::Zero(), 1.0), DegenerateInput);
  EXPECT_THROW(condition_jacobian(Vec3(0.0, 0.0, 1.0), 1.0, 0.0, 10.0), DegenerateInput);
}

TEST(Geometry, ZeroQuaternionThrows) {
  Quat q(0.0, 0.0, 0.0, 0.0);
  EXPECT_THROW(normalize(q), DegenerateInput);
}
