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

#include "meshgs/primitives.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "meshgs/error.hpp"

namespace meshgs {

TriangleMesh make_icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh make_icosphere(int level, double radius) {
  if (level < 0) throw Error(ErrorCode::kInvalidArgument, "icosphere level must be >= 0");
  TriangleMesh base = make_icosahedron();
  std::vector<Vec3> verts = base.vertices();
  std::vector<Face> faces = base.faces();
  for (int l = 0; l < level; ++l) {
    std::unordered_map<std::uint64_t, VertexId> mids;
    auto mid = [&](VertexId a, VertexId b) {
      auto [it, inserted] = mids.try_emplace(edge_key(a, b), static_cast<VertexId>(verts.size()));
      if (inserted) verts.push_back((0.5 * (verts[a] + verts[b])).normalized());
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const VertexId ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({ab, f[1], bc});
      next.push_back({ca, bc, f[2]});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  for (Vec3& p : verts) p *= radius;
  return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh make_uv_sphere(int segments, int rings, double radius) {
  if (segments < 3 || rings < 2) {
    throw Error(ErrorCode::kInvalidArgument, "uv sphere needs segments >= 3 and rings >= 2");
  }
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  verts.push_back({0, 0, radius});
  for (int r = 1; r < rings; ++r) {
    const double theta = std::numbers::pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      verts.push_back(radius * Vec3(std::sin(theta) * std::cos(phi),
                                    std::sin(theta) * std::sin(phi), std::cos(theta)));
    }
  }
  const auto south = static_cast<VertexId>(verts.size());
  verts.push_back({0, 0, -radius});
  auto ring_vertex = [segments](int r, int s) {
    return static_cast<VertexId>(1 + (r - 1) * segments + (s % segments));
  };
  for (int s = 0; s < segments; ++s) faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      const VertexId a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const VertexId c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      faces.push_back({a, c, d});
      faces.push_back({a, d, b});
    }
  }
  for (int s = 0; s < segments; ++s) {
    faces.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh make_grid(int nx, int ny, double spacing) {
  if (nx < 2 || ny < 2) throw Error(ErrorCode::kInvalidArgument, "grid needs at least 2x2 vertices");
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) verts.push_back({i * spacing, j * spacing, 0.0});
  }
  auto id = [nx](int i, int j) { return static_cast<VertexId>(j * nx + i); };
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

}  // namespace meshgs
