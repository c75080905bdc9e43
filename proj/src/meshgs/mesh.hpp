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

#include <array>
#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include "meshgs/types.hpp"

namespace meshgs {

using VertexId = std::uint32_t;
using FaceId = std::uint32_t;
using Face = std::array<VertexId, 3>;
using ContentHash = std::array<std::uint8_t, 32>;

/// Geometric frame of one triangle: unit normal, circumradius and centroid.
struct FaceFrame {
  Vec3 normal;
  double circumradius = 0.0;
  Vec3 centroid;
  double area = 0.0;
};

/// Key of an undirected edge, independent of endpoint order.
inline std::uint64_t edge_key(VertexId i, VertexId j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | j;
}

/// Indexed triangle mesh with 1-ring adjacency.
///
/// Faces are counter-clockwise vertex triples. Adjacency and incident-face
/// lists are kept sorted. The only mutation after construction is
/// split_face(); vertex positions are otherwise fixed (a deformed pose lives
/// outside the mesh, see deformer.hpp).
class TriangleMesh {
 public:
  TriangleMesh() = default;
  /// Throws Error(kInvalidArgument) on out-of-range or repeated face indices.
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t face_count() const { return faces_.size(); }
  bool empty() const { return faces_.empty(); }

  const std::vector<VertexId>& neighbors(VertexId v) const { return adjacency_[v]; }
  const std::vector<FaceId>& incident_faces(VertexId v) const { return vertex_faces_[v]; }
  const std::vector<std::vector<VertexId>>& adjacency() const { return adjacency_; }
  const std::vector<std::vector<FaceId>>& vertex_faces() const { return vertex_faces_; }

  /// Throws Error(kDegenerate) for a zero-area face.
  FaceFrame face_frame(FaceId f) const;

  /// Midpoint subdivision of one face. The parent slot is reused for the
  /// corner-a child; the other three children are appended. Returned order:
  /// {corner a, corner b, corner c, center}.
  std::array<FaceId, 4> split_face(FaceId f);

  /// Bumped by every topology change; lets caches of derived quantities
  /// (cotangent weights, solver factorizations) detect staleness.
  std::uint64_t revision() const { return revision_; }

  /// SHA-256 over vertex coordinates and face indices (little-endian).
  ContentHash content_hash() const;

  /// Recomputes adjacency from the face list alone.
  void rebuild_adjacency();

 private:
  void validate_faces() const;

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<std::vector<VertexId>> adjacency_;
  std::vector<std::vector<FaceId>> vertex_faces_;
  std::unordered_map<std::uint64_t, VertexId> midpoints_;
  std::uint64_t revision_ = 0;
};

/// Per undirected edge cotangent weight.
class EdgeWeights {
 public:
  double operator()(VertexId i, VertexId j) const;
  bool contains(VertexId i, VertexId j) const { return weights_.count(edge_key(i, j)) != 0; }
  std::size_t size() const { return weights_.size(); }
  const std::unordered_map<std::uint64_t, double>& raw() const { return weights_; }

 private:
  friend EdgeWeights cotangent_weights(const TriangleMesh& mesh);
  std::unordered_map<std::uint64_t, double> weights_;
};

inline constexpr double kMinCotangentWeight = 1e-6;

/// w_ij = (cot alpha + cot beta) / 2 over the one or two faces incident to
/// edge (i, j), clamped below at kMinCotangentWeight.
/// Throws Error(kDegenerate) naming a zero-area face and Error(kSolve) for an
/// edge shared by more than two faces.
EdgeWeights cotangent_weights(const TriangleMesh& mesh);

/// Free-function spelling of TriangleMesh::face_frame.
inline FaceFrame face_frame(const TriangleMesh& mesh, FaceId f) { return mesh.face_frame(f); }

double surface_area(const TriangleMesh& mesh);

/// Wavefront OBJ subset: `v` and triangular `f` records, 1-based (or
/// negative relative) indices; normal/uv references after '/' are ignored.
TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(std::istream& in);
/// Writes with round-trip precision so content_hash() survives save/load.
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
void save_obj(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
              const std::filesystem::path& path);

}  // namespace meshgs
