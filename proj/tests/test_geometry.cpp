#include <cmath>
#include <numbers>
#include <random>

#include "autoloop/geometry.hpp"
#include "doctest.h"

using namespace autoloop;

namespace {

constexpr double kPi = std::numbers::pi;

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return {Vec3(n(rng), n(rng), n(rng)), q};
}

bool near(const Pose& a, const Pose& b, double tol = 1e-9) {
  const auto e = pose_distance(a, b);
  return e.translation <= tol && e.rotation <= tol;
}

}  // namespace

TEST_CASE("compose") {
  const Pose p = Pose::from_axis_angle(Vec3::UnitZ(), 0.3, Vec3(1, 2, 3));
  CHECK(near(compose(Pose::identity(), p), p));
  CHECK(near(compose(p, invert(p)), Pose::identity()));
  const Pose x = Pose::from_translation(1, 0, 0);
  CHECK(near(compose(x, x), Pose::from_translation(2, 0, 0)));
}

TEST_CASE("invert") {
  CHECK(near(invert(Pose::identity()), Pose::identity()));
  CHECK(near(invert(Pose::from_translation(1, 2, 3)), Pose::from_translation(-1, -2, -3)));
  CHECK(near(invert(Pose::from_axis_angle(Vec3::UnitZ(), kPi / 2)),
             Pose::from_axis_angle(Vec3::UnitZ(), -kPi / 2)));
}

TEST_CASE("quaternion canonicalization") {
  const Pose a(Vec3::Zero(), Quat(0.5, 0.5, 0.5, 0.5));
  const Pose b(Vec3::Zero(), Quat(-0.5, -0.5, -0.5, -0.5));
  CHECK(a == b);
  CHECK(a.rotation().w() >= 0.0);
  const Pose c(Vec3::Zero(), Quat(2.0, 0.0, 0.0, 0.0));
  CHECK(std::abs(c.rotation().norm() - 1.0) < 1e-12);
}

TEST_CASE("transform_points") {
  PointCloud c;
  c.points = {{Vec3(1, 0, 0), 3}, {Vec3(0.2, -0.4, 1.0), 0}};
  CHECK(transform_points(c, Pose::identity()) == c);

  PointCloud single;
  single.points = {{Vec3(1, 0, 0), 1}};
  const auto r = transform_points(single, Pose::from_axis_angle(Vec3::UnitZ(), kPi / 2));
  CHECK((r.points[0].position - Vec3(0, 1, 0)).norm() < 1e-9);
  CHECK(r.points[0].object_id == 1);

  const Pose p = Pose::from_axis_angle(Vec3(1, 1, 0), 1.1, Vec3(0.3, -2, 5));
  const auto back = transform_points(transform_points(c, p), invert(p));
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK((back.points[i].position - c.points[i].position).norm() < 1e-9);
}

TEST_CASE("pose_distance") {
  const Pose p = Pose::from_translation(0.1, 0.2, 0.3);
  CHECK(pose_distance(p, p).translation == 0.0);
  CHECK(pose_distance(p, p).rotation == 0.0);
  const auto e = pose_distance(p, Pose::from_translation(0.15, 0.2, 0.3));
  CHECK(e.translation == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(e.rotation == 0.0);
  const auto r = pose_distance(Pose::identity(), Pose::from_axis_angle(Vec3::UnitX(), kPi));
  CHECK(r.translation == 0.0);
  CHECK(r.rotation == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("rotation vector round trip and canonical range") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    const Vec3 rv = p.rotation_vector();
    CHECK(rv.norm() <= kPi + 1e-12);
    CHECK(near(Pose::from_rotation_vector(p.translation(), rv), p, 1e-12));
  }
  const Vec3 wrapped = canonical_rotation_vector(Vec3(0, 0, 1.5 * kPi));
  CHECK((wrapped - Vec3(0, 0, -0.5 * kPi)).norm() < 1e-12);
}

TEST_CASE("property: associativity, involution, isometry") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(near(compose(compose(a, b), c), compose(a, compose(b, c))));
    CHECK(near(invert(invert(a)), a));
    CHECK(std::abs(compose(a, b).rotation().norm() - 1.0) < 1e-9);

    PointCloud cloud;
    for (int i = 0; i < 6; ++i) cloud.points.push_back({Vec3(n(rng), n(rng), n(rng)), i});
    const auto moved = transform_points(cloud, a);
    for (std::size_t i = 0; i < cloud.size(); ++i)
      for (std::size_t j = i + 1; j < cloud.size(); ++j) {
        const double d0 = (cloud.points[i].position - cloud.points[j].position).norm();
        const double d1 = (moved.points[i].position - moved.points[j].position).norm();
        CHECK(std::abs(d0 - d1) < 1e-9);
      }
  }
}
