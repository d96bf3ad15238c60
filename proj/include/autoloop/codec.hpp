#pragma once

// JSON line codec shared by the library file, the dataset file and the plan
// files. Records are strict: unknown fields are rejected.

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "autoloop/geometry.hpp"

namespace autoloop::codec {

using json = nlohmann::json;

[[noreturn]] void throw_parse(const std::string& what);

// Throws ParseError if `j` is not an object, lacks a required field or has a
// field outside `allowed`.
void check_fields(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {});

json encode(const Vec3& v);
Vec3 decode_vec3(const json& j);

json encode(const Pose& p);
Pose decode_pose(const json& j);

json encode(const PointCloud& c);
PointCloud decode_cloud(const json& j);

template <class T>
T get(const json& j, const char* field) {
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_parse(std::string("field '") + field + "': " + e.what());
  }
}

}  // namespace autoloop::codec
