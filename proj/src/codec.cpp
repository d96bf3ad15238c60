#include "autoloop/codec.hpp"

#include <algorithm>
#include <cmath>

#include "autoloop/error.hpp"

namespace autoloop::codec {

void throw_parse(const std::string& what) { throw ParseError(what); }

void check_fields(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional) {
  if (!j.is_object()) throw ParseError("expected an object");
  for (const char* f : required)
    if (!j.contains(f)) throw ParseError(std::string("missing field '") + f + "'");
  for (const auto& [key, _] : j.items()) {
    const auto match = [&key](const char* f) { return key == f; };
    if (std::none_of(required.begin(), required.end(), match) &&
        std::none_of(optional.begin(), optional.end(), match))
      throw ParseError("unknown field '" + key + "'");
  }
}

json encode(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 decode_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw ParseError("non-finite 3-vector");
  return v;
}

json encode(const Pose& p) {
  const Quat& q = p.rotation();
  return {{"t", encode(p.translation())},
          {"q", json::array({q.w(), q.x(), q.y(), q.z()})}};
}

Pose decode_pose(const json& j) {
  check_fields(j, {"t", "q"});
  const json& q = j.at("q");
  if (!q.is_array() || q.size() != 4) throw ParseError("expected quaternion [w,x,y,z]");
  Quat quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
            q[3].get<double>());
  if (!quat.coeffs().allFinite() || quat.norm() < 1e-6)
    throw ParseError("invalid quaternion");
  return Pose::from_stored(decode_vec3(j.at("t")), quat);
}

json encode(const PointCloud& c) {
  json arr = json::array();
  for (const auto& p : c.points)
    arr.push_back({p.position.x(), p.position.y(), p.position.z(), p.object_id});
  return arr;
}

PointCloud decode_cloud(const json& j) {
  if (!j.is_array()) throw ParseError("cloud must be an array");
  PointCloud c;
  c.points.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 4 || !e[3].is_number_integer())
      throw ParseError("cloud point must be [x,y,z,id]");
    c.points.push_back(
        {Vec3(e[0].get<double>(), e[1].get<double>(), e[2].get<double>()),
         e[3].get<int>()});
  }
  try {
    c.validate();
  } catch (const InvariantError& e) {
    throw ParseError(e.what());
  }
  return c;
}

}  // namespace autoloop::codec
