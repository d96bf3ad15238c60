#include "autoloop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "autoloop/error.hpp"

namespace autoloop {
namespace {

Quat canonical(Quat q) {
  q.normalize();
  const auto& c = q.coeffs();  // x y z w
  bool flip = q.w() < 0.0;
  if (q.w() == 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (c[i] != 0.0) {
        flip = c[i] < 0.0;
        break;
      }
    }
  }
  if (flip) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

Pose::Pose(const Vec3& translation, const Quat& rotation)
    : translation_(translation), rotation_(canonical(rotation)) {}

Pose Pose::from_stored(const Vec3& t, const Quat& q) {
  if (std::abs(q.norm() - 1.0) <= 1e-12 && q.w() > 0.0) {
    Pose p;
    p.translation_ = t;
    p.rotation_ = q;
    return p;
  }
  return {t, q};
}

Pose Pose::from_axis_angle(const Vec3& axis, double angle, const Vec3& t) {
  return {t, Quat(Eigen::AngleAxisd(angle, axis.normalized()))};
}

Pose Pose::from_rotation_vector(const Vec3& t, const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-300) return from_translation(t);
  return {t, Quat(Eigen::AngleAxisd(angle, rotvec / angle))};
}

Vec3 Pose::rotation_vector() const {
  const Vec3 v = rotation_.vec();
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  // w >= 0 by canonicalization, so the angle is in [0, pi].
  const double angle = 2.0 * std::atan2(s, rotation_.w());
  return v / s * angle;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.translation() + a.rotation() * b.translation(),
          a.rotation() * b.rotation()};
}

Pose invert(const Pose& p) {
  const Quat qi = p.rotation().conjugate();
  return {-(qi * p.translation()), qi};
}

PoseError pose_distance(const Pose& a, const Pose& b) {
  const Quat d = a.rotation().conjugate() * b.rotation();
  const double angle = 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
  return {(a.translation() - b.translation()).norm(),
          std::clamp(angle, 0.0, std::numbers::pi)};
}

Pose interpolate(const Pose& a, const Pose& b, double s) {
  return {a.translation() + s * (b.translation() - a.translation()),
          a.rotation().slerp(s, b.rotation())};
}

bool PointCloud::has_label(int id) const {
  return std::any_of(points.begin(), points.end(),
                     [id](const LabeledPoint& p) { return p.object_id == id; });
}

void PointCloud::validate() const {
  for (const auto& p : points) {
    if (!p.position.allFinite())
      throw InvariantError("point cloud contains a non-finite coordinate");
    if (p.object_id < 0)
      throw InvariantError("point cloud contains a negative object id");
  }
}

PointCloud transform_points(const PointCloud& cloud, const Pose& p) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& pt : cloud.points)
    out.points.push_back({p.apply(pt.position), pt.object_id});
  return out;
}

PointCloud downsample(const PointCloud& cloud, std::size_t max_points) {
  if (cloud.size() <= max_points) return cloud;
  PointCloud out;
  out.points.reserve(max_points);
  const double stride = static_cast<double>(cloud.size()) / max_points;
  for (std::size_t i = 0; i < max_points; ++i)
    out.points.push_back(cloud.points[static_cast<std::size_t>(i * stride)]);
  return out;
}

Vec3 canonical_rotation_vector(const Vec3& v) {
  const double angle = v.norm();
  if (angle <= std::numbers::pi) return v;
  const Vec3 axis = v / angle;
  double wrapped = std::fmod(angle, 2.0 * std::numbers::pi);
  if (wrapped > std::numbers::pi) wrapped -= 2.0 * std::numbers::pi;
  return axis * wrapped;
}

}  // namespace autoloop
