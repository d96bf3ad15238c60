#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <utility>
#include <vector>

namespace autoloop {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Rigid transform world <- frame. The rotation is kept unit-norm and
// canonicalized to w >= 0 so that q and -q compare equal.
class Pose {
 public:
  Pose() : translation_(Vec3::Zero()), rotation_(Quat::Identity()) {}
  Pose(const Vec3& translation, const Quat& rotation);

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {t, Quat::Identity()}; }
  static Pose from_translation(double x, double y, double z) {
    return from_translation(Vec3(x, y, z));
  }
  static Pose from_axis_angle(const Vec3& axis, double angle,
                              const Vec3& t = Vec3::Zero());
  // Reconstructs a pose read back from storage. Unit-norm canonical
  // quaternions are kept bit-for-bit; anything else is renormalized.
  static Pose from_stored(const Vec3& t, const Quat& q);
  // Rotation vector (axis * angle) parametrization.
  static Pose from_rotation_vector(const Vec3& t, const Vec3& rotvec);

  const Vec3& translation() const { return translation_; }
  const Quat& rotation() const { return rotation_; }

  // Rotation vector with magnitude in [0, pi].
  Vec3 rotation_vector() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  bool operator==(const Pose& o) const {
    return translation_ == o.translation_ &&
           rotation_.coeffs() == o.rotation_.coeffs();
  }

 private:
  Vec3 translation_;
  Quat rotation_;
};

// a o b: apply b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

struct PoseError {
  double translation;  // meters
  double rotation;     // radians, [0, pi]
};
PoseError pose_distance(const Pose& a, const Pose& b);

// Linear translation, slerp rotation.
Pose interpolate(const Pose& a, const Pose& b, double s);

struct LabeledPoint {
  Vec3 position;
  int object_id = 0;  // 0 = background / table

  bool operator==(const LabeledPoint& o) const {
    return position == o.position && object_id == o.object_id;
  }
};

struct PointCloud {
  std::vector<LabeledPoint> points;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
  bool operator==(const PointCloud& o) const { return points == o.points; }

  bool has_label(int id) const;
  // Throws InvariantError on non-finite coordinates or negative labels.
  void validate() const;
};

PointCloud transform_points(const PointCloud& cloud, const Pose& p);

// Keep at most `max_points`, sampled at a uniform stride.
PointCloud downsample(const PointCloud& cloud, std::size_t max_points);

// Wrap a rotation vector so that its magnitude lies in [0, pi].
Vec3 canonical_rotation_vector(const Vec3& v);

}  // namespace autoloop
