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

#pragma once

#include "json.hpp"

#include "meshgs/types.hpp"

namespace meshgs {

/// Pinhole camera. World-to-camera is x_cam = rotation * x_world + translation,
/// with the camera looking down +z, x to the right and y down the image.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  /// Throws Error(kInvalidArgument) unless fx, fy > 0, the image is non-empty
  /// and rotation is orthonormal within 1e-9.
  void validate() const;
};

/// Camera at `eye` looking at `target`; `up` fixes the roll.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
               int height);

/// The camera that sees the world moved by x -> q * x + t exactly as `camera`
/// saw the original world.
Camera compose_rigid(const Camera& camera, const Mat3& q, const Vec3& t);

/// Accepts either
///   {fx, fy, cx, cy, width, height, world_to_camera: 4x4}
/// or the NeRF-style
///   {camera_angle_x | fl_x/fl_y[/cx/cy], width|w, height|h, transform_matrix: 4x4}
/// where transform_matrix is camera-to-world with the camera looking down -z
/// and y up. Throws Error(kParse) on missing or malformed fields.
Camera camera_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const Camera& camera);

/// Converts a NeRF/OpenGL camera-to-world matrix into our world-to-camera pose.
void pose_from_camera_to_world(const Eigen::Matrix4d& c2w, Mat3* rotation, Vec3* translation);

}  // namespace meshgs
