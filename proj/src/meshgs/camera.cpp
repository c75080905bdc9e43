// Copyright 2026 The MeshGS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "meshgs/camera.hpp"

#include <cmath>

#include "meshgs/error.hpp"

namespace meshgs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "camera image size must be positive");
  }
  if (!rotation.allFinite() || !translation.allFinite() ||
      (rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "camera rotation is not orthonormal");
  }
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
               int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

Camera compose_rigid(const Camera& camera, const Mat3& q, const Vec3& t) {
  Camera out = camera;
  out.rotation = camera.rotation * q.transpose();
  out.translation = camera.translation - out.rotation * t;
  return out;
}

void pose_from_camera_to_world(const Eigen::Matrix4d& c2w, Mat3* rotation, Vec3* translation) {
  Mat3 r = c2w.topLeftCorner<3, 3>();
  // OpenGL camera axes (x right, y up, looking down -z) to ours (y down, +z).
  r.col(1) = -r.col(1);
  r.col(2) = -r.col(2);
  *rotation = r.transpose();
  *translation = -(*rotation) * c2w.topRightCorner<3, 1>();
}

namespace {

Eigen::Matrix4d matrix4_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.size() < 3) {
    throw Error(ErrorCode::kParse, std::string(name) + " must be a 4x4 (or 3x4) array");
  }
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int r = 0; r < static_cast<int>(j.size()) && r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) {
      throw Error(ErrorCode::kParse, std::string(name) + " rows must have 4 entries");
    }
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

double number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw Error(ErrorCode::kParse, std::string("camera field '") + key + "' missing or not a number");
  }
  return j[key].get<double>();
}

}  // namespace

Camera camera_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "camera must be a JSON object");
  try {
    Camera cam;
    cam.width = static_cast<int>(j.contains("width") ? number(j, "width") : number(j, "w"));
    cam.height = static_cast<int>(j.contains("height") ? number(j, "height") : number(j, "h"));
    if (j.contains("fx")) {
      cam.fx = number(j, "fx");
      cam.fy = number(j, "fy");
    } else if (j.contains("fl_x")) {
      cam.fx = number(j, "fl_x");
      cam.fy = j.contains("fl_y") ? number(j, "fl_y") : cam.fx;
    } else if (j.contains("camera_angle_x")) {
      cam.fx = cam.fy = 0.5 * cam.width / std::tan(0.5 * number(j, "camera_angle_x"));
    } else {
      throw Error(ErrorCode::kParse, "camera needs fx/fy, fl_x or camera_angle_x");
    }
    cam.cx = j.contains("cx") ? number(j, "cx") : 0.5 * cam.width;
    cam.cy = j.contains("cy") ? number(j, "cy") : 0.5 * cam.height;
    if (j.contains("world_to_camera")) {
      const Eigen::Matrix4d w2c = matrix4_from_json(j["world_to_camera"], "world_to_camera");
      cam.rotation = w2c.topLeftCorner<3, 3>();
      cam.translation = w2c.topRightCorner<3, 1>();
    } else if (j.contains("transform_matrix")) {
      pose_from_camera_to_world(matrix4_from_json(j["transform_matrix"], "transform_matrix"),
                                &cam.rotation, &cam.translation);
    } else {
      throw Error(ErrorCode::kParse, "camera needs world_to_camera or transform_matrix");
    }
    cam.validate();
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed camera JSON: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw Error(ErrorCode::kParse, e.what());
    throw;
  }
}

nlohmann::json camera_to_json(const Camera& camera) {
  nlohmann::json w2c = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < 4; ++c) {
      if (r < 3) {
        row.push_back(c < 3 ? camera.rotation(r, c) : camera.translation[r]);
      } else {
        row.push_back(c < 3 ? 0.0 : 1.0);
      }
    }
    w2c.push_back(row);
  }
  return {{"fx", camera.fx},         {"fy", camera.fy},         {"cx", camera.cx},
          {"cy", camera.cy},         {"width", camera.width},   {"height", camera.height},
          {"world_to_camera", w2c}};
}

}  // namespace meshgs
