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

#include <filesystem>
#include <string>
#include <vector>

#include "meshgs/mesh.hpp"
#include "meshgs/sh.hpp"

namespace meshgs {

/// One Gaussian bound to a mesh face.
///
/// All trainable quantities are stored unconstrained; the accessors below
/// map them into their valid ranges:
///   barycentric weights  w   = softmax(bary_logits)
///   normal offset        tau = 0.5 * tanh(tau_logit)        in [-0.5, 0.5]
///   scale                s   = exp(log_scale)
///   opacity              sigma = sigmoid(opacity_logit)
/// `rotation` is a quaternion (w, x, y, z), normalized on use.
struct BoundGaussian {
  FaceId face = 0;
  Vec3 bary_logits = Vec3::Zero();
  double tau_logit = 0.0;
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
  double opacity_logit = 0.0;
  std::vector<Vec3> sh;
};

struct GaussianCloud {
  std::vector<BoundGaussian> gaussians;
  int sh_degree = 0;
  ContentHash mesh_hash{};

  std::size_t size() const { return gaussians.size(); }
};

Vec3 barycentric(const BoundGaussian& g);
double normal_offset(const BoundGaussian& g);
Vec3 scale(const BoundGaussian& g);
double opacity(const BoundGaussian& g);

double sigmoid(double x);
Vec3 softmax(const Vec3& logits);
/// Inverse maps, for building Gaussians from target values.
Vec3 bary_logits_for(const Vec3& w);
double tau_logit_for(double tau);
double opacity_logit_for(double sigma);

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Mat3 quaternion_to_matrix(const Vec4& q);
Vec4 matrix_to_quaternion(const Mat3& r);

/// mu = sum_k w_k v_k + tau * R * n, with n and R the normal and
/// circumradius of the bound face.
Vec3 world_position(const BoundGaussian& g, const TriangleMesh& mesh);
Vec3 world_position(const BoundGaussian& g, const TriangleMesh& mesh, const FaceFrame& frame);

/// Sigma = R S S^T R^T.
Mat3 covariance(const BoundGaussian& g);

/// One Gaussian per face at the centroid, tau = 0, isotropic scale of half
/// the face circumradius, opacity 0.5, mid-gray colour.
/// Throws Error(kInvalidArgument) for an empty mesh.
GaussianCloud init_from_mesh(const TriangleMesh& mesh, int sh_degree);

/// Throws Error(kInvalidArgument) when a Gaussian references a missing face
/// or carries the wrong number of SH coefficients.
void validate_cloud(const GaussianCloud& cloud, const TriangleMesh& mesh);

inline constexpr std::uint32_t kCloudFormatVersion = 1;

struct CloudLoadResult {
  GaussianCloud cloud;
  std::vector<std::string> warnings;
};

/// Binary layout, little-endian:
///   "MGSC" | u32 version | u32 sh_degree | u64 count | 32-byte mesh hash
///   per Gaussian: u32 face | f32 bary_logits[3] | f32 tau_logit |
///                 f32 log_scale[3] | f32 rotation[4] | f32 opacity_logit |
///                 f32 sh[3 * (sh_degree + 1)^2]
/// Parameters are stored as f32.
void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path);

/// Throws Error(kVersion) on an unknown version and Error(kParse) on a
/// malformed or truncated file. A mesh hash different from
/// `expected_mesh_hash` (when given) is reported as a warning.
CloudLoadResult load_cloud(const std::filesystem::path& path,
                           const ContentHash* expected_mesh_hash = nullptr);

std::string hash_to_hex(const ContentHash& hash);

}  // namespace meshgs
